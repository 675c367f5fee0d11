//! Three-dimensional vector proxies: scalar/vector field views of 0- to
//! 3-forms, the classical Nédélec / Raviart-Thomas / BDM space names, and
//! curl/div-conforming interpolation through the generic machinery.

use std::sync::Arc;

use crate::biorth::{build_biorthogonal, BiorthogonalSystem};
use crate::error::{FeecError, Result};
use crate::exterior::sampled::{CoeffFn, SampledForm};
use crate::exterior::LpExponent;
use crate::facetdual::{FacetDualTables, KFunctionals};
use crate::interp::{fe_sampled_form, scott_zhang, InterpOptions, InterpolantResult};
use crate::mesh::{BoundarySubcomplex, SimplexId, SimplicialComplex};
use crate::spaces::{assemble_global, ElementTables, Family, GlobalFESpace};

/// Classical vector field interpretations of k-forms in ℝ³.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ProxyKind {
    /// 0-forms: scalar fields.
    Scalar,
    /// 1-forms paired with circulation: u ↦ u₁dx + u₂dy + u₃dz.
    Circulation,
    /// 2-forms paired with flux: u ↦ u₁dy∧dz − u₂dx∧dz + u₃dx∧dy.
    Flux,
    /// 3-forms: densities ρ dx∧dy∧dz.
    Density,
}

impl ProxyKind {
    pub fn form_degree(&self) -> usize {
        match self {
            ProxyKind::Scalar => 0,
            ProxyKind::Circulation => 1,
            ProxyKind::Flux => 2,
            ProxyKind::Density => 3,
        }
    }

    pub fn components(&self) -> usize {
        match self {
            ProxyKind::Scalar | ProxyKind::Density => 1,
            _ => 3,
        }
    }
}

/// A scalar or vector field with optional derivative fields (grad, curl, or
/// div depending on the kind).
#[derive(Clone)]
pub struct ProxyField {
    pub kind: ProxyKind,
    pub components: CoeffFn,
    /// grad for scalars, curl for circulation proxies, div for flux proxies.
    pub derivative: Option<CoeffFn>,
}

impl ProxyField {
    pub fn new(kind: ProxyKind, components: CoeffFn) -> ProxyField {
        ProxyField {
            kind,
            components,
            derivative: None,
        }
    }

    pub fn with_derivative(mut self, d: CoeffFn) -> ProxyField {
        self.derivative = Some(d);
        self
    }

    /// The differential form with this proxy: component order follows the
    /// lexicographic axis subsets (dx, dy, dz), (dx∧dy, dx∧dz, dy∧dz).
    pub fn to_form(&self) -> SampledForm {
        let k = self.kind.form_degree();
        let comp = self.components.clone();
        let coeffs: CoeffFn = match self.kind {
            ProxyKind::Scalar | ProxyKind::Density => Arc::new(move |x: &[f64]| comp(x)),
            ProxyKind::Circulation => Arc::new(move |x: &[f64]| comp(x)),
            ProxyKind::Flux => Arc::new(move |x: &[f64]| {
                let u = comp(x);
                vec![u[2], -u[1], u[0]]
            }),
        };
        let mut form = SampledForm::new(3, k, coeffs);
        if let Some(d) = &self.derivative {
            let d = d.clone();
            let d_coeffs: CoeffFn = match self.kind {
                // d(scalar) = grad in (dx, dy, dz) components.
                ProxyKind::Scalar => Arc::new(move |x: &[f64]| d(x)),
                // d(circulation u) = flux proxy of curl u.
                ProxyKind::Circulation => Arc::new(move |x: &[f64]| {
                    let c = d(x);
                    vec![c[2], -c[1], c[0]]
                }),
                // d(flux u) = div u · dx∧dy∧dz.
                ProxyKind::Flux => Arc::new(move |x: &[f64]| d(x)),
                ProxyKind::Density => Arc::new(move |_: &[f64]| vec![]),
            };
            form = form.with_d(d_coeffs);
        }
        form
    }

    /// Reads a sampled form back as a proxy field.
    pub fn from_form(kind: ProxyKind, form: &SampledForm) -> ProxyField {
        assert_eq!(form.degree, kind.form_degree());
        let coeffs = form.coeffs.clone();
        let components: CoeffFn = match kind {
            ProxyKind::Scalar | ProxyKind::Density | ProxyKind::Circulation => {
                Arc::new(move |x: &[f64]| coeffs(x))
            }
            ProxyKind::Flux => Arc::new(move |x: &[f64]| {
                let c = coeffs(x);
                vec![c[2], -c[1], c[0]]
            }),
        };
        ProxyField::new(kind, components)
    }

    /// Maximum round-trip and finite-difference d-correspondence residual at
    /// the given sample points (grad/curl/div against the form derivative).
    pub fn d_correspondence_residual(&self, samples: &[Vec<f64>]) -> f64 {
        let form = self.to_form();
        let step = 1e-5;
        let mut worst = 0.0f64;
        for x in samples {
            // Round trip.
            let back = ProxyField::from_form(self.kind, &form);
            let a = (self.components)(x);
            let b = (back.components)(x);
            for (u, v) in a.iter().zip(&b) {
                worst = worst.max((u - v).abs());
            }
            // Finite differences of the components against dω.
            let Some(_) = &self.derivative else { continue };
            let d_exact = form.eval_d(x).expect("derivative present");
            let fd = finite_difference_d(&form, x, step);
            for (u, v) in d_exact.iter().zip(&fd) {
                worst = worst.max((u - v).abs());
            }
        }
        worst
    }
}

/// Central-difference exterior derivative of a sampled k-form in ℝ³.
fn finite_difference_d(form: &SampledForm, x: &[f64], h: f64) -> Vec<f64> {
    use crate::exterior::polyform::subsets_k;
    let n = 3usize;
    let k = form.degree;
    let axes_k = subsets_k(0, n as u8, k);
    let axes_k1 = subsets_k(0, n as u8, k + 1);
    let partial = |i: usize, slot: usize| -> f64 {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        (form.eval(&xp)[slot] - form.eval(&xm)[slot]) / (2.0 * h)
    };
    axes_k1
        .iter()
        .map(|target| {
            let mut total = 0.0;
            for (pos, &i) in target.iter().enumerate() {
                let rest: Vec<u8> = target
                    .iter()
                    .copied()
                    .filter(|&j| j != i)
                    .collect();
                let slot = axes_k.binary_search(&rest).unwrap();
                let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
                total += sign * partial(i as usize, slot);
            }
            total
        })
        .collect()
}

/// The four classical space names.
pub fn family_of_name(name: &str) -> Result<(Family, usize)> {
    match name {
        "ned1" => Ok((Family::Trimmed, 1)),
        "ned2" => Ok((Family::Full, 1)),
        "rt" => Ok((Family::Trimmed, 2)),
        "bdm" => Ok((Family::Full, 2)),
        other => Err(FeecError::UnknownTarget(other.to_string())),
    }
}

/// Assembles a named space over a 3D complex with boundary conditions.
pub fn space_by_name(
    name: &str,
    r: u32,
    complex: &Arc<SimplicialComplex>,
    bc: &BoundarySubcomplex,
) -> Result<GlobalFESpace> {
    if complex.n != 3 {
        return Err(FeecError::WrongDimension {
            got: complex.n,
            expected: 3,
        });
    }
    let (family, k) = family_of_name(name)?;
    let tables = Arc::new(ElementTables::build(family, r, k, 3)?);
    assemble_global(complex, bc, family, r, k, tables)
}

/// Per-cell error report of a proxy interpolation.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ProxyErrorReport {
    pub h_max: f64,
    pub global_l2: f64,
    pub per_cell_max: f64,
    pub per_cell: Vec<(usize, f64)>,
}

/// Interpolates a proxy field with the Scott-Zhang operator of the named
/// space and reports L² errors.
pub fn proxy_interpolate(
    u: &ProxyField,
    name: &str,
    r: u32,
    complex: &Arc<SimplicialComplex>,
    bc: &BoundarySubcomplex,
) -> Result<(ProxyField, InterpolantResult, ProxyErrorReport, BiorthogonalSystem)> {
    let (family, k) = family_of_name(name)?;
    if complex.n != 3 {
        return Err(FeecError::WrongDimension {
            got: complex.n,
            expected: 3,
        });
    }
    assert_eq!(
        k,
        u.kind.form_degree(),
        "proxy kind must match the space's form degree"
    );
    let system = build_biorthogonal(complex, family, r, k)?;
    let tables = system.space.tables.clone();
    let pairs = system.pairs.clone();
    let fdt = FacetDualTables::build(tables, pairs)?;
    let anchors = complex.choose_anchors(bc)?;
    let kf = KFunctionals::build(complex, &system.space, &fdt, &anchors);
    let omega = u.to_form();
    let opts = InterpOptions::for_degree(r);
    let bc_opt = if bc.is_empty() { None } else { Some(bc) };
    let result = scott_zhang(&system, &kf, &omega, bc_opt, &opts)?;

    let per_cell: Vec<(usize, f64)> = complex
        .cells()
        .iter()
        .map(|&t| {
            let form = result.on_cell(&system.space, t);
            let err = crate::exterior::lp_norm_diff(
                complex,
                &[t],
                &omega,
                |_| Some(&form),
                LpExponent::Two,
                opts.order + 2,
            );
            (t.0, err)
        })
        .collect();
    let global_l2 = per_cell.iter().map(|(_, e)| e * e).sum::<f64>().sqrt();
    let per_cell_max = per_cell.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let report = ProxyErrorReport {
        h_max: complex.h_max(),
        global_l2,
        per_cell_max,
        per_cell,
    };
    let back = ProxyField::from_form(u.kind, &fe_sampled_form(&system.space, &result.coeffs));
    Ok((back, result, report, system))
}

/// Convenience: cells touched by a simplex, used in error bookkeeping.
pub fn touching_cells(complex: &SimplicialComplex, t: SimplexId) -> Vec<SimplexId> {
    complex.patches(t).expect("cell exists").star_cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::unit_cube_mesh;

    #[test]
    fn lowest_order_dimensions_on_tetrahedron() {
        let complex = Arc::new(
            crate::mesh::build_complex(
                vec![
                    vec![0.0, 0.0, 0.0],
                    vec![1.0, 0.0, 0.0],
                    vec![0.0, 1.0, 0.0],
                    vec![0.0, 0.0, 1.0],
                ],
                vec![vec![0, 1, 2, 3]],
            )
            .unwrap(),
        );
        let none = BoundarySubcomplex::empty();
        assert_eq!(space_by_name("ned1", 1, &complex, &none).unwrap().dim(), 6);
        assert_eq!(space_by_name("rt", 1, &complex, &none).unwrap().dim(), 4);
        assert_eq!(space_by_name("bdm", 1, &complex, &none).unwrap().dim(), 12);
        assert_eq!(space_by_name("ned2", 1, &complex, &none).unwrap().dim(), 12);
    }

    #[test]
    fn wrong_dimension_rejected() {
        let square = Arc::new(crate::mesh::unit_square_mesh(0));
        assert!(matches!(
            space_by_name("rt", 1, &square, &BoundarySubcomplex::empty()),
            Err(FeecError::WrongDimension { .. })
        ));
    }

    #[test]
    fn curl_and_div_correspondence() {
        let u = ProxyField::new(
            ProxyKind::Circulation,
            Arc::new(|x: &[f64]| {
                vec![x[1] * x[2], x[0].sin(), x[0] * x[1] * x[2]]
            }),
        )
        .with_derivative(Arc::new(|x: &[f64]| {
            // curl(u) for u = (yz, sin x, xyz).
            vec![
                x[0] * x[2] - 0.0,
                x[1] - x[1] * x[2],
                x[0].cos() - x[2],
            ]
        }));
        let samples = vec![vec![0.3, 0.4, 0.5], vec![0.8, 0.1, 0.9]];
        let res = u.d_correspondence_residual(&samples);
        assert!(res < 1e-4, "curl residual {res:.3e}");

        let v = ProxyField::new(
            ProxyKind::Flux,
            Arc::new(|x: &[f64]| vec![x[0] * x[0], x[1] * x[2], -x[2] * x[0]]),
        )
        .with_derivative(Arc::new(|x: &[f64]| vec![2.0 * x[0] + x[2] - x[0]]));
        let res = v.d_correspondence_residual(&samples);
        assert!(res < 1e-4, "div residual {res:.3e}");
    }

    #[test]
    fn polynomial_vector_fields_reproduced() {
        // A field in the lowest-order Nédélec space: u = a + b × x.
        let complex = Arc::new(unit_cube_mesh(0));
        let u = ProxyField::new(
            ProxyKind::Circulation,
            Arc::new(|x: &[f64]| {
                let a = [1.0, -0.5, 0.25];
                let b = [0.3, 0.7, -0.2];
                vec![
                    a[0] + b[1] * x[2] - b[2] * x[1],
                    a[1] + b[2] * x[0] - b[0] * x[2],
                    a[2] + b[0] * x[1] - b[1] * x[0],
                ]
            }),
        )
        .with_derivative(Arc::new(|_: &[f64]| vec![0.6, 1.4, -0.4]));
        let none = BoundarySubcomplex::empty();
        let (_, _, report, _) = proxy_interpolate(&u, "ned1", 1, &complex, &none).unwrap();
        assert!(report.global_l2 < 1e-8, "ned1 reproduction {:.3e}", report.global_l2);
    }

    #[test]
    fn boundary_conditions_zero_boundary_dofs() {
        let complex = Arc::new(unit_cube_mesh(0));
        let boundary = complex.full_boundary();
        // u with vanishing tangential trace: b(x)·(1,1,1) with b = Π xᵢ(1−xᵢ).
        let u = ProxyField::new(
            ProxyKind::Circulation,
            Arc::new(|x: &[f64]| {
                let b = x
                    .iter()
                    .map(|xi| xi * (1.0 - xi))
                    .product::<f64>();
                vec![b, b, b]
            }),
        )
        .with_derivative(Arc::new(|x: &[f64]| {
            let f = |i: usize| x[i] * (1.0 - x[i]);
            let df = |i: usize| 1.0 - 2.0 * x[i];
            // curl of b·(1,1,1).
            let gb = [
                df(0) * f(1) * f(2),
                f(0) * df(1) * f(2),
                f(0) * f(1) * df(2),
            ];
            vec![gb[1] - gb[2], gb[2] - gb[0], gb[0] - gb[1]]
        }));
        let (_, result, _, system) =
            proxy_interpolate(&u, "ned1", 1, &complex, &boundary).unwrap();
        for g in 0..system.dim() {
            let (s, _) = system.space.dofs[g];
            if boundary.contains(s) {
                assert_eq!(result.coeffs[g], 0.0);
            }
        }
    }
}
