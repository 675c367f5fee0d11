//! Degrees of freedom: facet-moment functionals ω ↦ ∫_S η ∧ tr_S ω with
//! polynomial weights η, realized on reference simplices and transported to
//! the mesh by barycentric pullback.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{FeecError, Result};
use crate::exterior::chart::Chart;
use crate::exterior::norms::{pair_poly, pair_poly_sampled};
use crate::exterior::polyform::PolyForm;
use crate::exterior::sampled::SampledForm;
use crate::linalg::condition_number;
use crate::mesh::{SimplexId, SimplicialComplex};
use crate::spaces::{local_basis, ElementTables, Family};

/// Weight space of the degrees of freedom attached to an m-simplex:
/// P⁻_{r+k−m}Λ^{m−k} for the full family, P_{r+k−m−1}Λ^{m−k} for the
/// trimmed family; `None` when the space is empty.
pub fn weight_space(family: Family, r: u32, k: usize, m: usize) -> Option<(Family, u32, usize)> {
    if k > m {
        return None;
    }
    let wk = m - k;
    match family {
        Family::Full => {
            let rw = r as i64 + k as i64 - m as i64;
            (rw >= 1).then(|| (Family::Trimmed, rw as u32, wk))
        }
        Family::Trimmed => {
            let rw = r as i64 + k as i64 - m as i64 - 1;
            (rw >= 0).then(|| (Family::Full, rw as u32, wk))
        }
    }
}

/// One degree of freedom: the weight form lives on the physical chart of the
/// simplex, sign-adjusted so that the reference duality transports exactly.
#[derive(Clone, Debug)]
pub struct DofFunctional {
    pub simplex: SimplexId,
    pub index: usize,
    pub weight: PolyForm,
}

impl DofFunctional {
    /// Applies the functional to a polynomial form given on a containing
    /// cell; `positions` are the host-local vertex positions of the simplex.
    pub fn apply_poly(&self, omega: &PolyForm, positions: &[usize]) -> Result<f64> {
        let tr = omega.trace(&self.weight.chart, positions)?;
        pair_poly(&self.weight, &tr)
    }

    /// Applies the functional to a form already living on the simplex.
    pub fn apply_local(&self, omega: &PolyForm) -> Result<f64> {
        pair_poly(&self.weight, omega)
    }

    /// Applies the functional to a sampled form by quadrature of the moment
    /// integral against the trace.
    pub fn apply_sampled(&self, omega: &SampledForm, order: usize) -> Result<f64> {
        if !omega.has_trace {
            return Err(FeecError::TraceUnavailable);
        }
        let coeffs = omega.coeffs.clone();
        Ok(pair_poly_sampled(&self.weight, move |x| coeffs(x), order))
    }
}

/// Reference dual pairs: adjusted weights on reference simplices such that
/// the weight/ring pairing is the identity matrix.
#[derive(Debug)]
pub struct DualPairs {
    pub family: Family,
    pub r: u32,
    pub k: usize,
    pub n: usize,
    /// Index m: δ-dual weights on the reference m-simplex, one per ring index.
    pub weights: Vec<Vec<PolyForm>>,
    /// Condition numbers of the weight/ring Gram systems.
    pub conditions: Vec<f64>,
}

/// Solves the reference Gram systems pairing candidate weights with the ring
/// bases.
pub fn build_dual_pairs(tables: &ElementTables) -> Result<DualPairs> {
    let (family, r, k, n) = (tables.family, tables.r, tables.k, tables.n);
    let mut weights = Vec::with_capacity(n + 1);
    let mut conditions = Vec::with_capacity(n + 1);
    for m in 0..=n {
        let nring = tables.ring_dim(m);
        if nring == 0 {
            weights.push(Vec::new());
            conditions.push(1.0);
            continue;
        }
        let chart = Chart::reference(m);
        let (wf, wr, wk) = weight_space(family, r, k, m).ok_or_else(|| {
            FeecError::SingularPairing {
                dim: m,
                cond: f64::INFINITY,
            }
        })?;
        let candidates = local_basis(&chart, wf, wr, wk);
        if candidates.dim() != nring {
            return Err(FeecError::SingularPairing {
                dim: m,
                cond: f64::INFINITY,
            });
        }
        // A_ij = ∫ η_i ∧ φ_j over the reference simplex.
        let a = DMatrix::from_fn(nring, nring, |i, j| {
            pair_poly(&candidates.forms[i], &tables.ring[m].forms[j]).expect("degree match")
        });
        let cond = condition_number(&a);
        let inv = a.clone().try_inverse().ok_or(FeecError::SingularPairing {
            dim: m,
            cond,
        })?;
        // Adjusted weights η̂_i = Σ_l (A⁻¹)_{il} η_l give η̂_i(φ_j) = δ_ij.
        let mut adjusted = Vec::with_capacity(nring);
        for i in 0..nring {
            let mut w = PolyForm::zero(chart.clone(), m - k);
            for l in 0..nring {
                let c = inv[(i, l)];
                if c != 0.0 {
                    w = w.add(&candidates.forms[l].scale(c));
                }
            }
            adjusted.push(w);
        }
        weights.push(adjusted);
        conditions.push(cond);
    }
    Ok(DualPairs {
        family,
        r,
        k,
        n,
        weights,
        conditions,
    })
}

/// All degrees of freedom of a complex (no boundary conditions), aligned
/// with the global index of the unconstrained space.
#[derive(Debug)]
pub struct DofSet {
    pub complex: Arc<SimplicialComplex>,
    pub pairs: Arc<DualPairs>,
    pub dofs: Vec<DofFunctional>,
    pub index_of: HashMap<(SimplexId, usize), usize>,
}

impl DofSet {
    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn dof(&self, s: SimplexId, i: usize) -> &DofFunctional {
        &self.dofs[self.index_of[&(s, i)]]
    }
}

pub fn build_dof_set(
    complex: &Arc<SimplicialComplex>,
    tables: &ElementTables,
    pairs: &Arc<DualPairs>,
) -> DofSet {
    let mut dofs = Vec::new();
    let mut index_of = HashMap::new();
    // Canonical coordinates of the reference weights, once per dimension.
    let canon_weights: Vec<Vec<(crate::spaces::CanonSpace, nalgebra::DVector<f64>)>> = (0
        ..=complex.n)
        .map(|m| {
            pairs.weights[m]
                .iter()
                .map(|w| {
                    let canon =
                        crate::spaces::CanonSpace::new(m, w.poly_degree(), w.degree);
                    let v = canon.to_vec(w);
                    (canon, v)
                })
                .collect()
        })
        .collect();
    for s in complex.all_simplices() {
        let m = s.dim;
        let nring = tables.ring_dim(m);
        if nring == 0 {
            continue;
        }
        let chart = Chart::of_simplex(complex, s.id);
        // Pull the functional back along the orientation: negatively
        // oriented cells flip the pairing sign.
        let sign = chart.orientation_sign as f64;
        for i in 0..nring {
            let (canon, v) = &canon_weights[m][i];
            let weight = canon.from_vec(&chart, v).scale(sign);
            index_of.insert((s.id, i), dofs.len());
            dofs.push(DofFunctional {
                simplex: s.id,
                index: i,
                weight,
            });
        }
    }
    DofSet {
        complex: complex.clone(),
        pairs: pairs.clone(),
        dofs,
        index_of,
    }
}
