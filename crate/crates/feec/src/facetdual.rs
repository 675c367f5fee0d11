//! Facet reformulation of the degrees of freedom: facet forms ξ̊ whose
//! moments against traces reproduce every dof, polynomial cell extensions Ξ
//! with vanishing traces on the other facets, the integration-by-parts
//! identity, and the K functionals of the Scott-Zhang interpolant.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dofs::DualPairs;
use crate::error::{FeecError, Result};
use crate::exterior::chart::Chart;
use crate::exterior::norms::{pair_poly, pair_poly_sampled};
use crate::exterior::polyform::{subsets_k, PolyForm};
use crate::exterior::sampled::SampledForm;
use crate::linalg::min_norm_solve;
use crate::mesh::{AnchorChoice, SimplexId, SimplicialComplex};
use crate::spaces::{local_basis, CanonSpace, ElementTables, Family, GlobalFESpace, RANK_TOL};

/// Residual accepted when solving the facet moment systems.
const MOMENT_TOL: f64 = 1e-9;

/// ξ̊ for one (facet pattern, sub pattern, index): canonical coefficients on
/// the reference facet at the recorded homogeneous degree.
#[derive(Clone, Debug)]
struct XiPattern {
    homo_degree: u32,
    vec: DVector<f64>,
}

/// Ξ on the reference cell for one (opposite vertex, sub pattern, index).
#[derive(Clone, Debug)]
struct CellExtPattern {
    homo_degree: u32,
    vec: DVector<f64>,
}

/// Reference tables of facet-dual forms and their cell extensions for one
/// (family, r, k, n) selection.
pub struct FacetDualTables {
    pub tables: Arc<ElementTables>,
    pub pairs: Arc<DualPairs>,
    /// Keyed by (positions of S within the facet, dof index).
    xi: HashMap<(Vec<u8>, usize), XiPattern>,
    /// Keyed by (opposite vertex position of the facet, positions of S
    /// within the facet, dof index).
    cell: HashMap<(usize, Vec<u8>, usize), CellExtPattern>,
}

impl FacetDualTables {
    pub fn build(tables: Arc<ElementTables>, pairs: Arc<DualPairs>) -> Result<FacetDualTables> {
        let n = tables.n;
        assert!(tables.k < n, "facet machinery requires k ≤ n−1");
        let mut xi = HashMap::new();
        let mut cell = HashMap::new();
        for m in 0..n {
            let nring = tables.ring_dim(m);
            if nring == 0 {
                continue;
            }
            for positions in subsets_k(0, n as u8, m + 1) {
                for i in 0..nring {
                    let pattern = solve_xi(&tables, &pairs, &positions, i)?;
                    for opposite in 0..=n {
                        let ext = extend_facet_bubble(&tables, opposite, &pattern)?;
                        cell.insert((opposite, positions.clone(), i), ext);
                    }
                    xi.insert((positions.clone(), i), pattern);
                }
            }
        }
        Ok(FacetDualTables {
            tables,
            pairs,
            xi,
            cell,
        })
    }
}

/// Solves the moment system on the reference facet: find ξ in
/// b_F · P_RΛ^{n−1−k}(F) with ∫_F ξ ∧ ρ_j = φ*_{S,i}(ρ_j) over a basis
/// {ρ_j} of P_rΛ^k(F), raising R until the residual is accepted.
fn solve_xi(
    tables: &ElementTables,
    pairs: &DualPairs,
    positions: &[u8],
    index: usize,
) -> Result<XiPattern> {
    let n = tables.n;
    let (r, k) = (tables.r, tables.k);
    let fdim = n - 1;
    let fchart = Chart::reference(fdim);
    let m = positions.len() - 1;
    let pos_usize: Vec<usize> = positions.iter().map(|&p| p as usize).collect();
    let schart = Chart::reference(m);

    // Test space: a basis of P_rΛ^k(F), with the dof values as targets.
    let rho = local_basis(&fchart, Family::Full, r, k);
    let weight = &pairs.weights[m][index];
    let mut rhs = DVector::zeros(rho.dim());
    for (j, form) in rho.forms.iter().enumerate() {
        let tr = form.trace(&schart, &pos_usize)?;
        rhs[j] = pair_poly(weight, &tr)?;
    }

    // Bubble factor: the product of all facet barycentric coordinates.
    let mut bubble = PolyForm::one(fchart.clone());
    for v in 0..=fdim {
        bubble = bubble.wedge(&PolyForm::bary_coord(fchart.clone(), v))?;
    }

    let cap = r + n as u32 + 2;
    let mut rr = r;
    loop {
        let psi = local_basis(&fchart, Family::Full, rr, fdim - k);
        let mut a = DMatrix::zeros(rho.dim(), psi.dim());
        let mut candidates = Vec::with_capacity(psi.dim());
        for (l, form) in psi.forms.iter().enumerate() {
            let cand = bubble.wedge(form)?;
            for (j, test) in rho.forms.iter().enumerate() {
                a[(j, l)] = pair_poly(&cand, test)?;
            }
            candidates.push(cand);
        }
        let (c, residual) = min_norm_solve(&a, &rhs, RANK_TOL);
        if residual <= MOMENT_TOL * (1.0 + rhs.norm()) {
            let mut xi = PolyForm::zero(fchart.clone(), fdim - k);
            for (l, cand) in candidates.iter().enumerate() {
                if c[l] != 0.0 {
                    xi = xi.add(&cand.scale(c[l]));
                }
            }
            let homo_degree = rr + (fdim as u32 + 1);
            let canon = CanonSpace::new(fdim, homo_degree, fdim - k);
            return Ok(XiPattern {
                homo_degree,
                vec: canon.to_vec(&xi),
            });
        }
        if rr >= cap {
            return Err(FeecError::MomentSystemRankDeficient {
                rows: rho.dim(),
                cols: psi.dim(),
                residual,
            });
        }
        rr += 1;
    }
}

/// Minimum-norm polynomial extension of a facet bubble into the reference
/// cell: the trace on the chosen facet reproduces ξ̊ and every other proper
/// trace vanishes.
fn extend_facet_bubble(
    tables: &ElementTables,
    opposite: usize,
    xi: &XiPattern,
) -> Result<CellExtPattern> {
    let n = tables.n;
    let kx = n - 1 - tables.k;
    let canon = CanonSpace::new(n, xi.homo_degree, kx);
    let facet_positions: Vec<usize> = (0..=n).filter(|&v| v != opposite).collect();
    let mut rows: Vec<DMatrix<f64>> = Vec::new();
    let mut rhs_blocks: Vec<DVector<f64>> = Vec::new();
    let min_dim = if kx == 0 { 0 } else { kx };
    for fsize in min_dim.max(0)..n {
        if fsize == 0 && kx > 0 {
            continue;
        }
        for g in subsets_k(0, n as u8 + 1, fsize + 1) {
            let gpos: Vec<usize> = g.iter().map(|&p| p as usize).collect();
            let (fcanon, t) = canon.trace_matrix(&gpos);
            let target = if gpos == facet_positions {
                xi.vec.clone()
            } else {
                DVector::zeros(fcanon.len())
            };
            rows.push(t);
            rhs_blocks.push(target);
        }
    }
    let total: usize = rows.iter().map(|b| b.nrows()).sum();
    let mut a = DMatrix::zeros(total, canon.len());
    let mut b = DVector::zeros(total);
    let mut at = 0;
    for (block, target) in rows.iter().zip(&rhs_blocks) {
        a.view_mut((at, 0), (block.nrows(), block.ncols())).copy_from(block);
        b.rows_mut(at, target.len()).copy_from(target);
        at += block.nrows();
    }
    let (x, residual) = min_norm_solve(&a, &b, RANK_TOL);
    if residual > MOMENT_TOL * (1.0 + b.norm()) {
        return Err(FeecError::NotABubble { residual });
    }
    Ok(CellExtPattern {
        homo_degree: xi.homo_degree,
        vec: x,
    })
}

/// The facet-dual form ξ̊_{F,S,i} transported to a physical facet.
#[derive(Clone, Debug)]
pub struct FacetDualForm {
    pub facet: SimplexId,
    pub sub: SimplexId,
    pub index: usize,
    pub xi: PolyForm,
}

/// The cell extension Ξ_{T,F,S,i} on a physical cell, with dΞ cached.
#[derive(Clone, Debug)]
pub struct CellExtension {
    pub cell: SimplexId,
    pub facet: SimplexId,
    pub sub: SimplexId,
    pub index: usize,
    pub form: PolyForm,
    pub d_form: PolyForm,
}

/// Host-local vertex positions of `sub` within `sup`.
fn positions_in(complex: &SimplicialComplex, sub: SimplexId, sup: SimplexId) -> Vec<u8> {
    let sv = &complex.simplex(sub).vertex_ids;
    let tv = &complex.simplex(sup).vertex_ids;
    sv.iter()
        .map(|v| tv.iter().position(|w| w == v).unwrap() as u8)
        .collect()
}

impl FacetDualTables {
    /// ξ̊ on a physical facet, or `None` when S carries no dofs.
    pub fn build_xi(
        &self,
        complex: &SimplicialComplex,
        facet: SimplexId,
        sub: SimplexId,
        index: usize,
    ) -> Option<FacetDualForm> {
        let m = complex.simplex(sub).dim;
        if self.tables.ring_dim(m) == 0 {
            return None;
        }
        let positions = positions_in(complex, sub, facet);
        let pattern = &self.xi[&(positions, index)];
        let canon = CanonSpace::new(complex.n - 1, pattern.homo_degree, complex.n - 1 - self.tables.k);
        let chart = Chart::of_simplex(complex, facet);
        Some(FacetDualForm {
            facet,
            sub,
            index,
            xi: canon.from_vec(&chart, &pattern.vec),
        })
    }

    /// Ξ on a physical cell.
    pub fn build_cell_extension(
        &self,
        complex: &SimplicialComplex,
        cell: SimplexId,
        facet: SimplexId,
        sub: SimplexId,
        index: usize,
    ) -> CellExtension {
        let facet_positions = positions_in(complex, facet, cell);
        let opposite = (0..=complex.n as u8)
            .find(|p| !facet_positions.contains(p))
            .unwrap() as usize;
        let sub_in_facet = positions_in(complex, sub, facet);
        let pattern = &self.cell[&(opposite, sub_in_facet, index)];
        let canon = CanonSpace::new(complex.n, pattern.homo_degree, complex.n - 1 - self.tables.k);
        let chart = Chart::of_simplex(complex, cell);
        let form = canon.from_vec(&chart, &pattern.vec);
        let d_form = form.exterior_derivative();
        CellExtension {
            cell,
            facet,
            sub,
            index,
            form,
            d_form,
        }
    }

    /// Maximum moment identity residual |∫_F ξ̊ ∧ tr_F ω − φ*_{S,i}(ω)| over
    /// a basis of P_rΛ^k(T) on a physical cell T ⊇ F.
    pub fn moment_residual(
        &self,
        complex: &SimplicialComplex,
        dofs: &crate::dofs::DofSet,
        cell: SimplexId,
        facet: SimplexId,
        sub: SimplexId,
        index: usize,
    ) -> f64 {
        let chart = Chart::of_simplex(complex, cell);
        let cell_basis = local_basis(&chart, Family::Full, self.tables.r, self.tables.k);
        let xi = self
            .build_xi(complex, facet, sub, index)
            .expect("dof exists");
        let fchart = &xi.xi.chart;
        let fpos: Vec<usize> = positions_in(complex, facet, cell)
            .iter()
            .map(|&p| p as usize)
            .collect();
        let spos: Vec<usize> = positions_in(complex, sub, cell)
            .iter()
            .map(|&p| p as usize)
            .collect();
        let dof = dofs.dof(sub, index);
        let mut worst = 0.0f64;
        for omega in &cell_basis.forms {
            let tr_f = omega.trace(fchart, &fpos).unwrap();
            let lhs = pair_poly(&xi.xi, &tr_f).unwrap();
            let rhs = dof.apply_poly(omega, &spos).unwrap();
            worst = worst.max((lhs - rhs).abs());
        }
        worst
    }
}

/// Integration-by-parts residual
/// |o(F,T)·∫_F ξ̊ ∧ tr_F ω − ∫_T (dΞ ∧ ω + (−1)^{n−k−1} Ξ ∧ dω)|
/// for a polynomial ω on the cell (both sides exact).
pub fn ibp_residual_poly(
    complex: &SimplicialComplex,
    ext: &CellExtension,
    xi: &FacetDualForm,
    omega: &PolyForm,
) -> f64 {
    let n = complex.n;
    let k = omega.degree;
    let o = complex.incidence(ext.facet, ext.cell).unwrap() as f64;
    let fpos: Vec<usize> = positions_in(complex, ext.facet, ext.cell)
        .iter()
        .map(|&p| p as usize)
        .collect();
    let tr = omega.trace(&xi.xi.chart, &fpos).unwrap();
    let lhs = o * pair_poly(&xi.xi, &tr).unwrap();
    let sign = if (n - k - 1) % 2 == 0 { 1.0 } else { -1.0 };
    let rhs = pair_poly(&ext.d_form, omega).unwrap()
        + sign * pair_poly(&ext.form, &omega.exterior_derivative()).unwrap();
    (lhs - rhs).abs()
}

/// Same residual for a sampled ω with analytic dω, both sides by quadrature.
pub fn ibp_residual_sampled(
    complex: &SimplicialComplex,
    ext: &CellExtension,
    xi: &FacetDualForm,
    omega: &SampledForm,
    order: usize,
) -> Result<f64> {
    let n = complex.n;
    let k = omega.degree;
    let o = complex.incidence(ext.facet, ext.cell).unwrap() as f64;
    let coeffs = omega.coeffs.clone();
    let lhs = o * pair_poly_sampled(&xi.xi, move |x| coeffs(x), order);
    let sign = if (n - k - 1) % 2 == 0 { 1.0 } else { -1.0 };
    let coeffs = omega.coeffs.clone();
    let d_coeffs = omega
        .d_coeffs
        .clone()
        .ok_or(FeecError::MissingExteriorDerivative)?;
    let rhs = pair_poly_sampled(&ext.d_form, move |x| coeffs(x), order)
        + sign * pair_poly_sampled(&ext.form, move |x| d_coeffs(x), order);
    Ok((lhs - rhs).abs())
}

/// The K functionals of the Scott-Zhang interpolant: cell dofs for
/// full-dimensional simplices, anchored facet integrals otherwise. The
/// orientation factor o(F_S, T_S) is folded into the stored extension so
/// that K agrees with φ* on finite element forms.
pub struct KFunctionals {
    pub complex: Arc<SimplicialComplex>,
    pub anchors: AnchorChoice,
    /// Per global dof (no-BC index): either the plain dof or the anchored
    /// extension data.
    entries: Vec<KEntry>,
}

enum KEntry {
    CellDof,
    Anchored {
        cell: SimplexId,
        ext: CellExtension,
        orientation: f64,
    },
}

impl KFunctionals {
    pub fn build(
        complex: &Arc<SimplicialComplex>,
        space: &GlobalFESpace,
        fdt: &FacetDualTables,
        anchors: &AnchorChoice,
    ) -> KFunctionals {
        let mut entries = Vec::with_capacity(space.dim());
        for &(s, i) in &space.dofs {
            if complex.simplex(s).dim == complex.n {
                entries.push(KEntry::CellDof);
                continue;
            }
            let (facet, cell) = anchors.anchor(s).expect("anchor for sub-cell simplex");
            let ext = fdt.build_cell_extension(complex, cell, facet, s, i);
            let orientation = complex.incidence(facet, cell).unwrap() as f64;
            entries.push(KEntry::Anchored {
                cell,
                ext,
                orientation,
            });
        }
        KFunctionals {
            complex: complex.clone(),
            anchors: anchors.clone(),
            entries,
        }
    }

    /// K applied to a sampled form (needs dω for the anchored functionals).
    pub fn apply_sampled(
        &self,
        space: &GlobalFESpace,
        dofs: &crate::dofs::DofSet,
        g: usize,
        omega: &SampledForm,
        order: usize,
    ) -> Result<f64> {
        let n = self.complex.n;
        let k = space.k;
        match &self.entries[g] {
            KEntry::CellDof => {
                let (s, i) = space.dofs[g];
                dofs.dof(s, i).apply_sampled(omega, order)
            }
            KEntry::Anchored {
                ext, orientation, ..
            } => {
                let sign = if (n - k + 1) % 2 == 0 { 1.0 } else { -1.0 };
                let coeffs = omega.coeffs.clone();
                let d_coeffs = omega
                    .d_coeffs
                    .clone()
                    .ok_or(FeecError::MissingExteriorDerivative)?;
                let a = pair_poly_sampled(&ext.d_form, move |x| coeffs(x), order);
                let b = pair_poly_sampled(&ext.form, move |x| d_coeffs(x), order);
                Ok(orientation * (a + sign * b))
            }
        }
    }

    /// K applied to per-cell polynomial data (exact integration): `omega_on`
    /// returns the restriction of the form to a cell.
    pub fn apply_piecewise_poly(
        &self,
        space: &GlobalFESpace,
        dofs: &crate::dofs::DofSet,
        g: usize,
        omega_on: impl Fn(SimplexId) -> PolyForm,
    ) -> f64 {
        let n = self.complex.n;
        let k = space.k;
        match &self.entries[g] {
            KEntry::CellDof => {
                let (s, i) = space.dofs[g];
                let cell = self.complex.containing_cells(s)[0];
                let form = omega_on(cell);
                let positions: Vec<usize> = positions_in(&self.complex, s, cell)
                    .iter()
                    .map(|&p| p as usize)
                    .collect();
                dofs.dof(s, i).apply_poly(&form, &positions).unwrap()
            }
            KEntry::Anchored {
                cell,
                ext,
                orientation,
                ..
            } => {
                let form = omega_on(*cell);
                let sign = if (n - k + 1) % 2 == 0 { 1.0 } else { -1.0 };
                let a = pair_poly(&ext.d_form, &form).unwrap();
                let b = pair_poly(&ext.form, &form.exterior_derivative()).unwrap();
                orientation * (a + sign * b)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    use crate::dofs::{build_dof_set, build_dual_pairs};
    use crate::mesh::{unit_cube_mesh, unit_square_mesh, BoundarySubcomplex};
    use crate::spaces::assemble_global;

    fn setup(
        complex: &Arc<SimplicialComplex>,
        family: Family,
        r: u32,
        k: usize,
    ) -> (Arc<ElementTables>, Arc<DualPairs>, FacetDualTables) {
        let tables = Arc::new(ElementTables::build(family, r, k, complex.n).unwrap());
        let pairs = Arc::new(build_dual_pairs(&tables).unwrap());
        let fdt = FacetDualTables::build(tables.clone(), pairs.clone()).unwrap();
        (tables, pairs, fdt)
    }

    #[test]
    fn point_evaluation_reproduced_on_edge() {
        // n=2, k=0, r=1: the vertex dof (point evaluation) must be
        // reproduced by a facet moment against both hat functions.
        let complex = Arc::new(unit_square_mesh(0));
        let (tables, pairs, fdt) = setup(&complex, Family::Full, 1, 0);
        let dofs = build_dof_set(&complex, &tables, &pairs);
        let facet = complex.find(&[0, 1]).unwrap();
        let vertex = complex.find(&[0]).unwrap();
        let cell = complex.containing_cells(facet)[0];
        let residual = fdt.moment_residual(&complex, &dofs, cell, facet, vertex, 0);
        assert!(residual < 1e-9, "moment residual {residual:.3e}");
    }

    #[test]
    fn constant_flux_moment_on_edge() {
        // k = n−1, S = F, trimmed r=1: ξ̊ = b_F / ∫ b_F as a 0-form.
        let complex = Arc::new(unit_square_mesh(0));
        let (tables, pairs, fdt) = setup(&complex, Family::Trimmed, 1, 1);
        let dofs = build_dof_set(&complex, &tables, &pairs);
        let facet = complex.find(&[0, 1]).unwrap();
        let xi = fdt.build_xi(&complex, facet, facet, 0).unwrap();
        // ∫_F ξ̊ ∧ tr ω = ∫_F tr ω for the constant-trace member: pairing ξ̊
        // against the constant 1-form dλ₁ gives 1.
        let one_form = PolyForm::bary_differential(xi.xi.chart.clone(), 1);
        let v = pair_poly(&xi.xi, &one_form).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
        let cell = complex.containing_cells(facet)[0];
        let residual = fdt.moment_residual(&complex, &dofs, cell, facet, facet, 0);
        assert!(residual < 1e-9);
    }

    #[test]
    fn moment_identity_over_full_cell_bases() {
        for (mesh, fam, r, k) in [
            (Arc::new(unit_square_mesh(0)), Family::Full, 2u32, 0usize),
            (Arc::new(unit_square_mesh(0)), Family::Trimmed, 1, 1),
            (Arc::new(unit_cube_mesh(0)), Family::Trimmed, 1, 1),
            (Arc::new(unit_cube_mesh(0)), Family::Trimmed, 1, 2),
        ] {
            let (tables, pairs, fdt) = setup(&mesh, fam, r, k);
            let dofs = build_dof_set(&mesh, &tables, &pairs);
            let mut checked = 0;
            for &facet in mesh.simplices_of_dim(mesh.n - 1).iter().take(4) {
                let cell = mesh.containing_cells(facet)[0];
                let fverts = mesh.simplex(facet).vertex_ids.clone();
                for mask in 1u32..(1 << fverts.len()) {
                    let verts: Vec<usize> = (0..fverts.len())
                        .filter(|i| mask & (1 << i) != 0)
                        .map(|i| fverts[i])
                        .collect();
                    let sub = mesh.find(&verts).unwrap();
                    let m = mesh.simplex(sub).dim;
                    for i in 0..tables.ring_dim(m) {
                        let res = fdt.moment_residual(&mesh, &dofs, cell, facet, sub, i);
                        assert!(
                            res < 1e-9,
                            "{fam:?} r={r} k={k} sub dim {m}: residual {res:.3e}"
                        );
                        checked += 1;
                    }
                }
            }
            assert!(checked > 0, "at least one dof checked");
        }
    }

    #[test]
    fn cell_extension_traces() {
        let complex = Arc::new(unit_cube_mesh(0));
        let (tables, _pairs, fdt) = setup(&complex, Family::Trimmed, 1, 1);
        let facet = complex.simplices_of_dim(2)[0];
        let cell = complex.containing_cells(facet)[0];
        let edge_verts = complex.simplex(facet).vertex_ids[0..2].to_vec();
        let sub = complex.find(&edge_verts).unwrap();
        assert!(tables.ring_dim(1) > 0);
        let xi = fdt.build_xi(&complex, facet, sub, 0).unwrap();
        let ext = fdt.build_cell_extension(&complex, cell, facet, sub, 0);

        // tr_F Ξ = ξ̊.
        let fpos: Vec<usize> = positions_in(&complex, facet, cell)
            .iter()
            .map(|&p| p as usize)
            .collect();
        let tr = ext.form.trace(&xi.xi.chart, &fpos).unwrap();
        assert!(tr.coeff_distance(&xi.xi) < 1e-10);

        // Zero trace on the other facets.
        for &(other, _) in complex.facets_of_cell(cell) {
            if other == facet {
                continue;
            }
            let opos: Vec<usize> = positions_in(&complex, other, cell)
                .iter()
                .map(|&p| p as usize)
                .collect();
            let ochart = Chart::of_simplex(&complex, other);
            let tr = ext.form.trace(&ochart, &opos).unwrap();
            assert!(tr.coeff_norm() < 1e-10);
        }

        // d commutes with the facet trace.
        let d_tr = ext.d_form.trace(&xi.xi.chart, &fpos).unwrap();
        let tr_d = tr.exterior_derivative();
        assert!(d_tr.coeff_distance(&tr_d) < 1e-10);
    }

    #[test]
    fn ibp_zero_and_random_polynomials() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (mesh, fam, r, k) in [
            (Arc::new(unit_square_mesh(0)), Family::Full, 1u32, 0usize),
            (Arc::new(unit_square_mesh(0)), Family::Trimmed, 1, 1),
            (Arc::new(unit_cube_mesh(0)), Family::Trimmed, 1, 1),
        ] {
            let (tables, _pairs, fdt) = setup(&mesh, fam, r, k);
            let facet = mesh.simplices_of_dim(mesh.n - 1)[0];
            let cell = mesh.containing_cells(facet)[0];
            let sub_verts = mesh.simplex(facet).vertex_ids[0..k.max(1)].to_vec();
            let sub = if k == 0 {
                mesh.find(&sub_verts[0..1]).unwrap()
            } else {
                mesh.find(&mesh.simplex(facet).vertex_ids[0..=k]).unwrap()
            };
            if tables.ring_dim(mesh.simplex(sub).dim) == 0 {
                continue;
            }
            let xi = fdt.build_xi(&mesh, facet, sub, 0).unwrap();
            let ext = fdt.build_cell_extension(&mesh, cell, facet, sub, 0);
            let chart = Chart::of_simplex(&mesh, cell);

            let zero = PolyForm::zero(chart.clone(), k);
            assert!(ibp_residual_poly(&mesh, &ext, &xi, &zero) < 1e-14);

            let basis = local_basis(&chart, Family::Full, r, k);
            for _ in 0..50 {
                let mut omega = PolyForm::zero(chart.clone(), k);
                for f in &basis.forms {
                    omega = omega.add(&f.scale(rng.gen_range(-1.0..1.0)));
                }
                let res = ibp_residual_poly(&mesh, &ext, &xi, &omega);
                assert!(res < 1e-9, "{fam:?} r={r} k={k}: ibp residual {res:.3e}");
            }
        }
    }

    #[test]
    fn ibp_smooth_sampled_form() {
        let complex = Arc::new(unit_square_mesh(0));
        let (_tables, _pairs, fdt) = setup(&complex, Family::Full, 1, 0);
        let facet = complex.find(&[0, 1]).unwrap();
        let cell = complex.containing_cells(facet)[0];
        let vertex = complex.find(&[0]).unwrap();
        let xi = fdt.build_xi(&complex, facet, vertex, 0).unwrap();
        let ext = fdt.build_cell_extension(&complex, cell, facet, vertex, 0);
        // ω = sin(x)cos(y) with analytic dω.
        let omega = SampledForm::new(
            2,
            0,
            Arc::new(|x: &[f64]| vec![x[0].sin() * x[1].cos()]),
        )
        .with_d(Arc::new(|x: &[f64]| {
            vec![x[0].cos() * x[1].cos(), -x[0].sin() * x[1].sin()]
        }));
        let res = ibp_residual_sampled(&complex, &ext, &xi, &omega, 2 + 6).unwrap();
        assert!(res < 1e-6, "residual {res:.3e}");
    }

    #[test]
    fn k_matrix_is_identity_on_fe_basis() {
        for (mesh, fam, r, k) in [
            (Arc::new(unit_square_mesh(1)), Family::Trimmed, 1u32, 1usize),
            (Arc::new(unit_square_mesh(1)), Family::Full, 2, 0),
            (Arc::new(unit_cube_mesh(0)), Family::Trimmed, 1, 1),
        ] {
            let (tables, pairs, fdt) = setup(&mesh, fam, r, k);
            let dofs = build_dof_set(&mesh, &tables, &pairs);
            let space = assemble_global(
                &mesh,
                &BoundarySubcomplex::empty(),
                fam,
                r,
                k,
                tables.clone(),
            )
            .unwrap();
            let anchors = mesh.choose_anchors(&BoundarySubcomplex::empty()).unwrap();
            let kf = KFunctionals::build(&mesh, &space, &fdt, &anchors);
            let system = crate::biorth::build_biorthogonal(&mesh, fam, r, k).unwrap();
            let mut worst = 0.0f64;
            for g in 0..space.dim() {
                let coeffs = system.expand(&[(g, 1.0)]);
                for gp in 0..space.dim() {
                    let v = kf.apply_piecewise_poly(&space, &dofs, gp, |cell| {
                        let pos = space.cell_position(cell);
                        space.cell_form(pos, &coeffs)
                    });
                    let expect = if gp == g { 1.0 } else { 0.0 };
                    worst = worst.max((v - expect).abs());
                }
            }
            assert!(worst < 1e-9, "{fam:?} r={r} k={k}: K matrix residual {worst:.3e}");
        }
    }

    #[test]
    fn k_vanishes_on_boundary_condition_data() {
        // ω with vanishing trace on the whole boundary: K of boundary dofs
        // must be zero up to quadrature error.
        let complex = Arc::new(unit_square_mesh(1));
        let (tables, pairs, fdt) = setup(&complex, Family::Trimmed, 1, 1);
        let dofs = build_dof_set(&complex, &tables, &pairs);
        let boundary = complex.full_boundary();
        let space = assemble_global(
            &complex,
            &BoundarySubcomplex::empty(),
            Family::Trimmed,
            1,
            1,
            tables.clone(),
        )
        .unwrap();
        let anchors = complex.choose_anchors(&boundary).unwrap();
        let kf = KFunctionals::build(&complex, &space, &fdt, &anchors);
        // ω = b(x,y)·(dx + dy) with b = x(1−x)y(1−y): tangential trace zero.
        let omega = SampledForm::new(
            2,
            1,
            Arc::new(|x: &[f64]| {
                let b = x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
                vec![b, b]
            }),
        )
        .with_d(Arc::new(|x: &[f64]| {
            let bx = (1.0 - 2.0 * x[0]) * x[1] * (1.0 - x[1]);
            let by = x[0] * (1.0 - x[0]) * (1.0 - 2.0 * x[1]);
            // d(b dx + b dy) = (∂x b − ∂y b) dx∧dy.
            vec![bx - by]
        }));
        let mut checked = 0;
        for g in 0..space.dim() {
            let (s, _) = space.dofs[g];
            if !boundary.contains(s) {
                continue;
            }
            let v = kf.apply_sampled(&space, &dofs, g, &omega, 10).unwrap();
            assert!(v.abs() < 1e-6, "boundary K = {v:.3e}");
            checked += 1;
        }
        assert!(checked > 0);
    }
}
