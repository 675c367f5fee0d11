//! The localized biorthogonal system: a basis {φ_{S,i}} of the global space
//! paired with degrees of freedom {φ*_{S,i}} so that φ*(φ) is the identity,
//! built by a dimension-descending sweep that corrects each extended bubble
//! by the already-final forms of higher-dimensional simplices.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::dofs::{build_dof_set, build_dual_pairs, DofSet, DualPairs};
use crate::error::Result;
use crate::exterior::chart::Chart;
use crate::exterior::norms::{lp_norm_poly, pair_poly};
use crate::exterior::polyform::{subsets_k, PolyForm};
use crate::exterior::LpExponent;
use crate::mesh::{BoundarySubcomplex, SimplexId, SimplicialComplex};
use crate::spaces::{assemble_global, CanonSpace, ElementTables, Family, GlobalFESpace};

/// Sparse coefficient vector over the geometric-decomposition basis.
pub type SparseVec = Vec<(usize, f64)>;

/// The biorthogonal system over a complex (no boundary conditions; restrict
/// afterwards).
pub struct BiorthogonalSystem {
    pub space: GlobalFESpace,
    pub dofs: DofSet,
    pub pairs: Arc<DualPairs>,
    /// φ_{S,i} as sparse coefficient vectors, aligned with `space.dofs`.
    pub phis: Vec<SparseVec>,
}

/// Reference pairing of the dofs of a host simplex against the extension of
/// a positioned subsimplex: entry (l, i) = φ*_{host,l}(Ext φ_{sub,i,0}).
fn correction_tables(
    tables: &ElementTables,
    pairs: &DualPairs,
) -> HashMap<(usize, Vec<u8>), DMatrix<f64>> {
    let mut out = HashMap::new();
    for m in 0..tables.n + 1 {
        if tables.ring_dim(m) == 0 {
            continue;
        }
        for host in (m + 1)..=tables.n {
            let nhost = tables.ring_dim(host);
            if nhost == 0 {
                continue;
            }
            let chart = Chart::reference(host);
            for positions in subsets_k(0, host as u8 + 1, m + 1) {
                let ext = tables.extension(host, &positions);
                let mut mat = DMatrix::zeros(nhost, tables.ring_dim(m));
                for i in 0..tables.ring_dim(m) {
                    let form = tables.local[host]
                        .canon
                        .from_vec(&chart, &ext.column(i).into_owned());
                    for l in 0..nhost {
                        mat[(l, i)] =
                            pair_poly(&pairs.weights[host][l], &form).expect("degree match");
                    }
                }
                out.insert((host, positions), mat);
            }
        }
    }
    out
}

/// Builds the biorthogonal system by the dimension-descending sweep.
pub fn build_biorthogonal(
    complex: &Arc<SimplicialComplex>,
    family: Family,
    r: u32,
    k: usize,
) -> Result<BiorthogonalSystem> {
    let family = family.normalized(k, complex.n);
    let tables = Arc::new(ElementTables::build(family, r, k, complex.n)?);
    let pairs = Arc::new(build_dual_pairs(&tables)?);
    let space = assemble_global(
        complex,
        &BoundarySubcomplex::empty(),
        family,
        r,
        k,
        tables.clone(),
    )?;
    let dofs = build_dof_set(complex, &tables, &pairs);
    let corrections = correction_tables(&tables, &pairs);

    let dim = space.dim();
    let mut phis: Vec<SparseVec> = vec![Vec::new(); dim];
    // Sweep simplex dimensions from n down to 0. Global indices are grouped
    // by simplex; the ordering within a dimension is irrelevant.
    for m in (0..=complex.n).rev() {
        if tables.ring_dim(m) == 0 {
            continue;
        }
        for &s in complex.simplices_of_dim(m) {
            for i in 0..tables.ring_dim(m) {
                let g = space.index_of[&(s.into(), i)];
                let mut acc: HashMap<usize, f64> = HashMap::new();
                acc.insert(g, 1.0);
                if m < complex.n {
                    // Subtract φ*_{T,l}(Ext φ_{S,i,0}) φ_{T,l} over all T ⊋ S.
                    for t in supersimplices(complex, s) {
                        let ht = complex.simplex(t).dim;
                        if tables.ring_dim(ht) == 0 || ht == m {
                            continue;
                        }
                        let positions = space.positions_in(s, t);
                        let mat = &corrections[&(ht, positions)];
                        for l in 0..tables.ring_dim(ht) {
                            let c = mat[(l, i)];
                            if c == 0.0 {
                                continue;
                            }
                            let gt = space.index_of[&(t, l)];
                            for &(idx, v) in &phis[gt] {
                                *acc.entry(idx).or_insert(0.0) -= c * v;
                            }
                        }
                    }
                }
                let mut sparse: SparseVec = acc
                    .into_iter()
                    .filter(|(_, v)| v.abs() > 0.0)
                    .collect();
                sparse.sort_by_key(|(idx, _)| *idx);
                phis[g] = sparse;
            }
        }
    }
    Ok(BiorthogonalSystem {
        space,
        dofs,
        pairs,
        phis,
    })
}

/// All simplices strictly containing `s` (any dimension above it).
fn supersimplices(complex: &SimplicialComplex, s: SimplexId) -> Vec<SimplexId> {
    let sv = &complex.simplex(s).vertex_ids;
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for &cell in complex.containing_cells(s) {
        let cv = complex.simplex(cell).vertex_ids.clone();
        for mask in 1u32..(1 << cv.len()) {
            let verts: Vec<usize> = (0..cv.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| cv[i])
                .collect();
            if verts.len() <= sv.len() {
                continue;
            }
            if sv.iter().all(|v| verts.contains(v)) {
                let id = complex.find(&verts).unwrap();
                if seen.insert(id) {
                    out.push(id);
                }
            }
        }
    }
    out.sort_unstable();
    out
}

impl BiorthogonalSystem {
    pub fn complex(&self) -> &Arc<SimplicialComplex> {
        &self.space.complex
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Dense coefficient vector of a linear combination Σ c_g φ_g.
    pub fn expand(&self, combo: &[(usize, f64)]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for &(g, c) in combo {
            if c == 0.0 {
                continue;
            }
            for &(idx, v) in &self.phis[g] {
                out[idx] += c * v;
            }
        }
        out
    }

    /// Applies φ*_{g'} to the finite element form with the given dense
    /// coefficients over the geometric-decomposition basis.
    pub fn apply_dof_to_coeffs(&self, gprime: usize, coeffs: &DVector<f64>) -> f64 {
        let (s, i) = self.space.dofs[gprime];
        let dof = self.dofs.dof(s, i);
        let complex = self.complex();
        let cell = complex.containing_cells(s)[0];
        let cell_pos = self.space.cell_position(cell);
        let form = self.space.cell_form(cell_pos, coeffs);
        let positions: Vec<usize> = self
            .space
            .positions_in(s, cell)
            .iter()
            .map(|&p| p as usize)
            .collect();
        dof.apply_poly(&form, &positions).expect("trace exists")
    }

    /// Maximum deviation of [φ*_{g'}(φ_g)] from the identity.
    pub fn biorthogonality_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for g in 0..self.dim() {
            let coeffs = self.expand(&[(g, 1.0)]);
            // Only dofs whose simplex meets the support can be nonzero, but
            // checking all of them is the stronger test on small meshes; for
            // large meshes restrict to dofs of simplices touching the support.
            let support_cells = self.support_cells(g);
            let mut candidates = std::collections::HashSet::new();
            for &t in &support_cells {
                let cv = self.complex().simplex(t).vertex_ids.clone();
                for mask in 1u32..(1 << cv.len()) {
                    let verts: Vec<usize> = (0..cv.len())
                        .filter(|i| mask & (1 << i) != 0)
                        .map(|i| cv[i])
                        .collect();
                    let id = self.complex().find(&verts).unwrap();
                    for l in 0..self.space.tables.ring_dim(verts.len() - 1) {
                        candidates.insert(self.space.index_of[&(id, l)]);
                    }
                }
            }
            for gp in candidates {
                let v = self.apply_dof_to_coeffs(gp, &coeffs);
                let expect = if gp == g { 1.0 } else { 0.0 };
                worst = worst.max((v - expect).abs());
            }
        }
        worst
    }

    /// Cells on which φ_g has a nonzero restriction.
    pub fn support_cells(&self, g: usize) -> Vec<SimplexId> {
        let mut cells = std::collections::HashSet::new();
        for &(idx, _) in &self.phis[g] {
            let (s, _) = self.space.dofs[idx];
            for &t in self.complex().containing_cells(s) {
                cells.insert(t);
            }
        }
        let mut out: Vec<SimplexId> = cells.into_iter().collect();
        out.sort_unstable();
        out
    }

    /// Maximum trace norm of φ_{S,i} on simplices S′ with S ⊄ S′
    /// (the locality property).
    pub fn locality_residual(&self) -> f64 {
        let complex = self.complex();
        let mut worst = 0.0f64;
        for g in 0..self.dim() {
            let (s, _) = self.space.dofs[g];
            let coeffs = self.expand(&[(g, 1.0)]);
            for &t in &self.support_cells(g) {
                let cell_pos = self.space.cell_position(t);
                let form = self.space.cell_form(cell_pos, &coeffs);
                let cv = complex.simplex(t).vertex_ids.clone();
                for mask in 1u32..(1 << cv.len()) {
                    let verts: Vec<usize> = (0..cv.len())
                        .filter(|i| mask & (1 << i) != 0)
                        .map(|i| cv[i])
                        .collect();
                    if verts.len() - 1 < self.space.k {
                        continue;
                    }
                    let sprime = complex.find(&verts).unwrap();
                    if complex.is_subsimplex(s, sprime) {
                        continue;
                    }
                    let positions: Vec<usize> = self
                        .space
                        .positions_in(sprime, t)
                        .iter()
                        .map(|&p| p as usize)
                        .collect();
                    let fchart = Chart::of_simplex(complex, sprime);
                    let tr = form.trace(&fchart, &positions).unwrap();
                    worst = worst.max(tr.coeff_norm());
                }
            }
        }
        worst
    }

    /// Restriction to the boundary-condition space: the retained global
    /// indices {(S, i) : S ∉ 𝒰}.
    pub fn restrict_bc(&self, bc: &BoundarySubcomplex) -> Vec<usize> {
        (0..self.dim())
            .filter(|&g| !bc.contains(self.space.dofs[g].0))
            .collect()
    }

    /// Measured scaling constants of the theorem: the sup of
    /// h_S^{k−n/p}·‖φ_{S,i}‖_{L^p(T)} over S, i and cells T ⊇ S, and the
    /// operator ratio sup ‖φ*(ω)φ‖/‖ω‖ over random local polynomial forms.
    pub fn measure_constants(&self, p: LpExponent, seed: u64) -> ConstantsReport {
        let complex = self.complex();
        let n = complex.n as f64;
        let k = self.space.k as f64;
        let p_exp = match p {
            LpExponent::One => 1.0,
            LpExponent::Two => 2.0,
            LpExponent::Infinity => f64::INFINITY,
        };
        let n_over_p = if p_exp.is_infinite() { 0.0 } else { n / p_exp };
        let order = 2 * self.space.r as usize + 4;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut norm_constant = 0.0f64;
        let mut ratio_constant = 0.0f64;
        for g in 0..self.dim() {
            let (s, i) = self.space.dofs[g];
            let h_s = if complex.simplex(s).dim == 0 {
                // Use the smallest adjacent edge as the vertex length scale.
                complex.vertex_min_edge[complex.simplex(s).vertex_ids[0]]
            } else {
                complex.diameter(s)
            };
            let coeffs = self.expand(&[(g, 1.0)]);
            for &t in complex.containing_cells(s) {
                let cell_pos = self.space.cell_position(t);
                let form = self.space.cell_form(cell_pos, &coeffs);
                let norm = lp_norm_poly(&form, p, order);
                norm_constant = norm_constant.max(h_s.powf(k - n_over_p) * norm);

                // Operator bound against random local polynomial forms.
                let chart = &self.space.cell_charts[cell_pos];
                let canon = CanonSpace::new(complex.n, self.space.r, self.space.k);
                let local = &self.space.tables.local[complex.n];
                for _ in 0..3 {
                    let mut v = DVector::zeros(local.dim());
                    for x in v.iter_mut() {
                        *x = rng.gen_range(-1.0..1.0);
                    }
                    let omega = canon.from_vec(chart, &(&local.vectors * v));
                    let omega_norm = lp_norm_poly(&omega, p, order);
                    if omega_norm < 1e-14 {
                        continue;
                    }
                    let positions: Vec<usize> = self
                        .space
                        .positions_in(s, t)
                        .iter()
                        .map(|&p| p as usize)
                        .collect();
                    let value = self
                        .dofs
                        .dof(s, i)
                        .apply_poly(&omega, &positions)
                        .expect("trace exists");
                    ratio_constant = ratio_constant.max(value.abs() * norm / omega_norm);
                }
            }
        }
        ConstantsReport {
            p: p.label().to_string(),
            norm_constant,
            ratio_constant,
        }
    }

    /// Dense biorthogonality matrix, for inspection dumps on small systems.
    pub fn dense_matrix(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let mut m = DMatrix::zeros(dim, dim);
        for g in 0..dim {
            let coeffs = self.expand(&[(g, 1.0)]);
            for gp in 0..dim {
                m[(gp, g)] = self.apply_dof_to_coeffs(gp, &coeffs);
            }
        }
        m
    }

    /// Per-cell restriction of one φ_g as a PolyForm.
    pub fn phi_on_cell(&self, g: usize, cell_pos: usize) -> PolyForm {
        let coeffs = self.expand(&[(g, 1.0)]);
        self.space.cell_form(cell_pos, &coeffs)
    }
}

/// Measured norm and operator constants of the biorthogonal system.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ConstantsReport {
    pub p: String,
    pub norm_constant: f64,
    pub ratio_constant: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_complex, unit_cube_mesh, unit_square_mesh};

    #[test]
    fn p1_system_is_nodal() {
        // k=0, r=1: no higher-dimensional dofs exist, so φ equals the hat
        // basis and the dof matrix is the identity.
        let complex = Arc::new(unit_square_mesh(0));
        let system = build_biorthogonal(&complex, Family::Full, 1, 0).unwrap();
        assert_eq!(system.dim(), 4);
        for g in 0..system.dim() {
            assert_eq!(system.phis[g], vec![(g, 1.0)]);
        }
        assert!(system.biorthogonality_residual() < 1e-12);
    }

    #[test]
    fn whitney_triangle_identity() {
        let complex = Arc::new(
            build_complex(
                vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![0, 1, 2]],
            )
            .unwrap(),
        );
        let system = build_biorthogonal(&complex, Family::Trimmed, 1, 1).unwrap();
        assert_eq!(system.dim(), 3);
        let m = system.dense_matrix();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((m[(i, j)] - expect).abs() < 1e-10, "{m}");
            }
        }
    }

    #[test]
    fn quadratic_scalar_corrections() {
        // Full r=2, k=0 on one triangle: vertex forms are corrected by edge
        // bubbles; the full 6×6 dof matrix is the identity.
        let complex = Arc::new(
            build_complex(
                vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![0, 1, 2]],
            )
            .unwrap(),
        );
        let system = build_biorthogonal(&complex, Family::Full, 2, 0).unwrap();
        assert_eq!(system.dim(), 6);
        let m = system.dense_matrix();
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (m[(i, j)] - expect).abs() < 1e-10,
                    "entry ({i},{j}) = {}",
                    m[(i, j)]
                );
            }
        }
        // At least one vertex form must carry an edge-bubble correction.
        let has_correction = (0..system.dim()).any(|g| system.phis[g].len() > 1);
        assert!(has_correction);
    }

    #[test]
    fn biorthogonality_and_locality_on_meshes() {
        let square = Arc::new(unit_square_mesh(1));
        for (family, r, k) in [
            (Family::Full, 1u32, 0usize),
            (Family::Full, 2, 0),
            (Family::Trimmed, 1, 1),
            (Family::Full, 1, 1),
            (Family::Trimmed, 2, 1),
        ] {
            let system = build_biorthogonal(&square, family, r, k).unwrap();
            assert!(
                system.biorthogonality_residual() < 1e-9,
                "biorth {family:?} r={r} k={k}"
            );
            assert!(
                system.locality_residual() < 1e-9,
                "locality {family:?} r={r} k={k}"
            );
        }
        let cube = Arc::new(unit_cube_mesh(0));
        for (family, r, k) in [(Family::Trimmed, 1u32, 1usize), (Family::Trimmed, 1, 2)] {
            let system = build_biorthogonal(&cube, family, r, k).unwrap();
            assert!(system.biorthogonality_residual() < 1e-9);
            assert!(system.locality_residual() < 1e-9);
        }
    }

    #[test]
    fn bc_restriction_counts_and_traces() {
        let complex = Arc::new(unit_square_mesh(0));
        let boundary = complex.full_boundary();

        // k=0 r=1: no interior vertices on the 2-triangle mesh.
        let system = build_biorthogonal(&complex, Family::Full, 1, 0).unwrap();
        assert!(system.restrict_bc(&boundary).is_empty());
        let fine = Arc::new(unit_square_mesh(1));
        let fine_boundary = fine.full_boundary();
        let system = build_biorthogonal(&fine, Family::Full, 1, 0).unwrap();
        assert_eq!(system.restrict_bc(&fine_boundary).len(), 1);

        // Whitney forms: only the diagonal edge survives.
        let system = build_biorthogonal(&complex, Family::Trimmed, 1, 1).unwrap();
        let kept = system.restrict_bc(&boundary);
        assert_eq!(kept.len(), 1);
        let (s, _) = system.space.dofs[kept[0]];
        assert_eq!(complex.simplex(s).vertex_ids, vec![0, 3]);

        // Retained forms have vanishing traces on every boundary simplex.
        let coeffs = system.expand(&[(kept[0], 1.0)]);
        for b in boundary.members() {
            if complex.simplex(b).dim < system.space.k {
                continue;
            }
            let cell = complex.containing_cells(b)[0];
            let cell_pos = system.space.cell_position(cell);
            let form = system.space.cell_form(cell_pos, &coeffs);
            let positions: Vec<usize> = system
                .space
                .positions_in(b, cell)
                .iter()
                .map(|&p| p as usize)
                .collect();
            let fchart = Chart::of_simplex(&complex, b);
            assert!(form.trace(&fchart, &positions).unwrap().coeff_norm() < 1e-10);
        }
    }

    #[test]
    fn measured_constants_stable_under_refinement() {
        let mut values: Vec<ConstantsReport> = Vec::new();
        for level in 0..3 {
            let complex = Arc::new(unit_square_mesh(level));
            let system = build_biorthogonal(&complex, Family::Trimmed, 1, 1).unwrap();
            values.push(system.measure_constants(LpExponent::Two, 0));
        }
        for w in values.windows(2) {
            let ratio = w[1].norm_constant / w[0].norm_constant;
            assert!(
                (0.5..=2.0).contains(&ratio),
                "norm constants {:?}",
                values.iter().map(|v| v.norm_constant).collect::<Vec<_>>()
            );
        }
        // After the first refinement all cells are similar, so the constant
        // stabilizes tightly.
        let late = values[2].norm_constant / values[1].norm_constant;
        assert!((late - 1.0).abs() < 0.05, "late ratio {late}");
    }
}
