//! Polynomial differential form spaces P_rΛ^k and P_r⁻Λ^k on simplices,
//! their trace-free (ring) subspaces, extension operators, and global finite
//! element spaces over a complex.
//!
//! All local constructions are done in canonical coordinates: monomials of
//! homogeneous degree r times the dλ basis, which makes coefficient vectors
//! unique and geometry-independent. Reference tables are computed once per
//! (family, r, k, n) and transported to physical simplices barycentrically.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{FeecError, Result};
use crate::exterior::chart::Chart;
use crate::exterior::norms::l2_inner_poly;
use crate::exterior::polyform::{subsets_k, BaryMonomial, PolyForm, Term, WedgeIndex};
use crate::linalg::{min_norm_solve, mutual_span_residual, nullspace, orthonormal_columns};
use crate::mesh::{BoundarySubcomplex, SimplexId, SimplicialComplex};

/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// The two finite element families of polynomial differential forms.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Family {
    /// P_rΛ^k, all polynomial coefficients of degree ≤ r.
    Full,
    /// P_r⁻Λ^k = P_{r−1}Λ^k + κ P_{r−1}Λ^{k+1}, the trimmed family.
    Trimmed,
}

impl Family {
    /// Applies the forced identifications P_rΛ⁰ = P_r⁻Λ⁰ (use Full at k=0)
    /// and P_r⁻Λⁿ = P_{r−1}Λⁿ (use Trimmed at k=n).
    pub fn normalized(self, k: usize, n: usize) -> Family {
        if k == 0 {
            Family::Full
        } else if k == n {
            Family::Trimmed
        } else {
            self
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Family::Full => "full",
            Family::Trimmed => "trimmed",
        }
    }
}

/// Family plus degree selection with its validity constraints.
#[derive(Copy, Clone, Debug)]
pub struct FamilySelector {
    pub family: Family,
    pub r: u32,
    pub k: usize,
}

impl FamilySelector {
    pub fn new(family: Family, r: u32, k: usize, n: usize) -> FamilySelector {
        assert!(r >= 1, "polynomial degree r must be at least 1");
        assert!(k <= n, "form degree k must not exceed the dimension");
        FamilySelector {
            family: family.normalized(k, n),
            r,
            k,
        }
    }
}

/// Canonical coordinates for polynomial k-forms on a d-simplex whose
/// monomials all have homogeneous degree R: index pairs (wedge, monomial).
#[derive(Clone, Debug)]
pub struct CanonSpace {
    pub dim: usize,
    pub homo_degree: u32,
    pub degree: usize,
    monos: Vec<Vec<u32>>,
    wedges: Vec<Vec<u8>>,
    mono_slot: HashMap<Vec<u32>, usize>,
}

fn monomials(vars: usize, total: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = vec![0u32; vars];
    fn rec(pos: usize, left: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos + 1 == current.len() {
            current[pos] = left;
            out.push(current.clone());
            return;
        }
        for v in 0..=left {
            current[pos] = v;
            rec(pos + 1, left - v, current, out);
        }
    }
    rec(0, total, &mut current, &mut out);
    out
}

impl CanonSpace {
    pub fn new(dim: usize, homo_degree: u32, degree: usize) -> CanonSpace {
        let monos = monomials(dim + 1, homo_degree);
        let wedges = subsets_k(1, dim as u8 + 1, degree);
        let mono_slot = monos
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        CanonSpace {
            dim,
            homo_degree,
            degree,
            monos,
            wedges,
            mono_slot,
        }
    }

    pub fn len(&self) -> usize {
        self.monos.len() * self.wedges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Canonical coefficient vector of a form (homogenized to this degree).
    pub fn to_vec(&self, form: &PolyForm) -> DVector<f64> {
        assert_eq!(form.degree, self.degree);
        let h = form.homogenize(self.homo_degree);
        let mut v = DVector::zeros(self.len());
        for t in h.terms() {
            let w = self
                .wedges
                .binary_search(&t.wedge.0)
                .expect("canonical wedge");
            let m = self.mono_slot[&t.mono.0];
            v[w * self.monos.len() + m] += t.coeff;
        }
        v
    }

    /// Form on the given chart from canonical coefficients.
    pub fn from_vec(&self, chart: &Arc<Chart>, v: &DVector<f64>) -> PolyForm {
        assert_eq!(chart.dim(), self.dim);
        let mut terms = Vec::new();
        for (wi, wedge) in self.wedges.iter().enumerate() {
            for (mi, mono) in self.monos.iter().enumerate() {
                let c = v[wi * self.monos.len() + mi];
                if c != 0.0 {
                    terms.push(Term {
                        coeff: c,
                        mono: BaryMonomial(mono.clone()),
                        wedge: WedgeIndex(wedge.clone()),
                    });
                }
            }
        }
        PolyForm::new(chart.clone(), self.degree, terms)
    }

    /// Basis form of one canonical slot on the reference chart.
    fn slot_form(&self, chart: &Arc<Chart>, idx: usize) -> PolyForm {
        let mut v = DVector::zeros(self.len());
        v[idx] = 1.0;
        self.from_vec(chart, &v)
    }

    /// Matrix of the trace onto the face with the given host-local vertex
    /// positions, mapping this space to the face's canonical space.
    pub fn trace_matrix(&self, positions: &[usize]) -> (CanonSpace, DMatrix<f64>) {
        let fd = positions.len() - 1;
        let target = CanonSpace::new(fd, self.homo_degree, self.degree.min(fd + 1));
        let chart = Chart::reference(self.dim);
        let fchart = Chart::reference(fd);
        let mut m = DMatrix::zeros(target.len(), self.len());
        if self.degree > fd {
            return (target, m);
        }
        for idx in 0..self.len() {
            let form = self.slot_form(&chart, idx);
            let tr = form.trace(&fchart, positions).expect("valid face positions");
            m.set_column(idx, &target.to_vec(&tr));
        }
        (target, m)
    }

    /// Matrix of the exterior derivative into the canonical space of degree
    /// k+1 forms with homogeneous monomial degree R−1.
    pub fn d_matrix(&self) -> (CanonSpace, DMatrix<f64>) {
        let target = CanonSpace::new(
            self.dim,
            self.homo_degree.saturating_sub(1),
            (self.degree + 1).min(self.dim + 1),
        );
        let chart = Chart::reference(self.dim);
        let mut m = DMatrix::zeros(target.len(), self.len());
        if self.degree + 1 > self.dim || self.homo_degree == 0 {
            return (target, m);
        }
        for idx in 0..self.len() {
            let form = self.slot_form(&chart, idx).exterior_derivative();
            m.set_column(idx, &target.to_vec(&form));
        }
        (target, m)
    }

    /// Embedding into the same space at a higher homogeneous degree.
    pub fn embed_matrix(&self, homo_degree: u32) -> (CanonSpace, DMatrix<f64>) {
        assert!(homo_degree >= self.homo_degree);
        let target = CanonSpace::new(self.dim, homo_degree, self.degree);
        let chart = Chart::reference(self.dim);
        let mut m = DMatrix::zeros(target.len(), self.len());
        for idx in 0..self.len() {
            let form = self.slot_form(&chart, idx);
            m.set_column(idx, &target.to_vec(&form));
        }
        (target, m)
    }
}

/// Spanning set of the selected family on a chart: homogeneous monomials
/// times dλ wedges for P_r, and P_{r−1} plus monomial-weighted Whitney forms
/// for P_r⁻.
pub fn spanning_forms(chart: &Arc<Chart>, family: Family, r: u32, k: usize) -> Vec<PolyForm> {
    let d = chart.dim();
    let mut out = Vec::new();
    if k > d {
        return out;
    }
    match family {
        Family::Full => {
            for wedge in subsets_k(1, d as u8 + 1, k) {
                for mono in monomials(d + 1, r) {
                    out.push(PolyForm::new(
                        chart.clone(),
                        k,
                        vec![Term {
                            coeff: 1.0,
                            mono: BaryMonomial(mono),
                            wedge: WedgeIndex(wedge.clone()),
                        }],
                    ));
                }
            }
        }
        Family::Trimmed => {
            assert!(r >= 1);
            out.extend(spanning_forms(chart, Family::Full, r - 1, k));
            for sigma in subsets_k(0, d as u8 + 1, k + 1) {
                let sigma_usize: Vec<usize> = sigma.iter().map(|&v| v as usize).collect();
                let whitney = PolyForm::whitney(chart.clone(), &sigma_usize);
                for mono in monomials(d + 1, r - 1) {
                    let m = PolyForm::new(
                        chart.clone(),
                        0,
                        vec![Term {
                            coeff: 1.0,
                            mono: BaryMonomial(mono),
                            wedge: WedgeIndex(Vec::new()),
                        }],
                    );
                    out.push(m.wedge(&whitney).expect("scalar wedge"));
                }
            }
        }
    }
    out
}

/// A basis of the selected local space on one simplex, with canonical
/// coefficient vectors and the L² Gram matrix on the host.
#[derive(Clone, Debug)]
pub struct LocalBasis {
    pub chart: Arc<Chart>,
    pub family: Family,
    pub r: u32,
    pub k: usize,
    pub canon: CanonSpace,
    /// Orthonormal canonical coefficient columns.
    pub vectors: DMatrix<f64>,
    pub forms: Vec<PolyForm>,
}

impl LocalBasis {
    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// L²(S) Gram matrix of the basis forms.
    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.forms.len();
        DMatrix::from_fn(n, n, |i, j| l2_inner_poly(&self.forms[i], &self.forms[j]))
    }
}

/// Constructs a basis by rank-revealing orthogonalization of the spanning
/// set in canonical coordinates.
pub fn local_basis(chart: &Arc<Chart>, family: Family, r: u32, k: usize) -> LocalBasis {
    let d = chart.dim();
    let canon = CanonSpace::new(d, r, k);
    let span = spanning_forms(chart, family, r, k);
    let mut m = DMatrix::zeros(canon.len(), span.len());
    for (j, f) in span.iter().enumerate() {
        m.set_column(j, &canon.to_vec(f));
    }
    let mut vectors = orthonormal_columns(&m, RANK_TOL);
    crate::linalg::fix_column_signs(&mut vectors);
    let forms = (0..vectors.ncols())
        .map(|j| canon.from_vec(chart, &vectors.column(j).into_owned()))
        .collect();
    LocalBasis {
        chart: chart.clone(),
        family,
        r,
        k,
        canon,
        vectors,
        forms,
    }
}

/// Basis of the ring (bubble) space: members whose traces vanish on every
/// proper subsimplex.
#[derive(Clone, Debug)]
pub struct RingBasis {
    pub chart: Arc<Chart>,
    pub family: Family,
    pub r: u32,
    pub k: usize,
    pub canon: CanonSpace,
    pub vectors: DMatrix<f64>,
    pub forms: Vec<PolyForm>,
}

impl RingBasis {
    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Nullspace of the stacked trace maps onto all proper subsimplices of
/// dimension ≥ k (lower-dimensional traces of k-forms vanish identically).
pub fn ring_basis(chart: &Arc<Chart>, family: Family, r: u32, k: usize) -> RingBasis {
    let d = chart.dim();
    let base = local_basis(chart, family, r, k);
    let mut rows: Vec<DMatrix<f64>> = Vec::new();
    for fsize in (k.max(1))..=d {
        // Faces with fsize+1 vertices, i.e. dimension fsize ≥ k (and ≥ 1).
        for positions in subsets_k(0, d as u8 + 1, fsize + 1) {
            if positions.len() == d + 1 {
                continue;
            }
            let pos: Vec<usize> = positions.iter().map(|&p| p as usize).collect();
            let (_, t) = base.canon.trace_matrix(&pos);
            rows.push(t * &base.vectors);
        }
    }
    if k == 0 {
        // Vertex traces (point evaluations) constrain 0-forms.
        for v in 0..=d {
            if d == 0 {
                break;
            }
            let (_, t) = base.canon.trace_matrix(&[v]);
            rows.push(t * &base.vectors);
        }
    }
    let total_rows: usize = rows.iter().map(|m| m.nrows()).sum();
    let mut stacked = DMatrix::zeros(total_rows, base.dim());
    let mut at = 0;
    for block in rows {
        stacked.view_mut((at, 0), (block.nrows(), block.ncols())).copy_from(&block);
        at += block.nrows();
    }
    let null = nullspace(&stacked, RANK_TOL);
    let mut vectors = &base.vectors * null;
    crate::linalg::fix_column_signs(&mut vectors);
    // Unit peak coefficient: recovers the classical normalizations (Whitney
    // forms, bare barycentric bubbles).
    for mut col in vectors.column_iter_mut() {
        let peak = col.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if peak > 0.0 {
            col /= peak;
        }
    }
    let forms = (0..vectors.ncols())
        .map(|j| base.canon.from_vec(chart, &vectors.column(j).into_owned()))
        .collect();
    RingBasis {
        chart: chart.clone(),
        family,
        r,
        k,
        canon: base.canon,
        vectors,
        forms,
    }
}

/// Residual of the equivalence P_r⁻Λ^k = P_{r−1}Λ^k + κ P_{r−1}Λ^{k+1},
/// comparing the Whitney-built trimmed space against the Koszul definition.
pub fn koszul_space_equivalence(chart: &Arc<Chart>, r: u32, k: usize) -> f64 {
    let d = chart.dim();
    let canon = CanonSpace::new(d, r, k);
    let whitney = local_basis(chart, Family::Trimmed, r, k);
    let mut columns: Vec<DVector<f64>> = Vec::new();
    for f in spanning_forms(chart, Family::Full, r - 1, k) {
        columns.push(canon.to_vec(&f));
    }
    if k + 1 <= d {
        for f in spanning_forms(chart, Family::Full, r - 1, k + 1) {
            columns.push(canon.to_vec(&f.koszul_barycenter()));
        }
    }
    let mut koszul = DMatrix::zeros(canon.len(), columns.len());
    for (j, c) in columns.iter().enumerate() {
        koszul.set_column(j, c);
    }
    mutual_span_residual(&whitney.vectors, &koszul, RANK_TOL)
}

/// Reference tables for one (family, r, k, n): local and ring bases on the
/// reference simplices plus the extension operators for every position
/// pattern of a subsimplex inside a host simplex.
#[derive(Debug)]
pub struct ElementTables {
    pub family: Family,
    pub r: u32,
    pub k: usize,
    pub n: usize,
    /// Index m: tables on the reference m-simplex.
    pub local: Vec<LocalBasis>,
    pub ring: Vec<RingBasis>,
    /// (host_dim, sub positions in the host) → canonical coefficients of the
    /// extended ring basis, one column per ring index.
    ext: HashMap<(usize, Vec<u8>), DMatrix<f64>>,
}

impl ElementTables {
    pub fn build(family: Family, r: u32, k: usize, n: usize) -> Result<ElementTables> {
        let family = family.normalized(k, n);
        let mut local = Vec::with_capacity(n + 1);
        let mut ring = Vec::with_capacity(n + 1);
        for m in 0..=n {
            let chart = Chart::reference(m);
            local.push(local_basis(&chart, family, r, k));
            ring.push(ring_basis(&chart, family, r, k));
        }
        let mut tables = ElementTables {
            family,
            r,
            k,
            n,
            local,
            ring,
            ext: HashMap::new(),
        };
        tables.build_extensions()?;
        Ok(tables)
    }

    pub fn ring_dim(&self, m: usize) -> usize {
        self.ring[m].dim()
    }

    /// Extension of the reference ring basis of the positioned subsimplex
    /// into the host space, as canonical coefficient columns.
    pub fn extension(&self, host_dim: usize, positions: &[u8]) -> &DMatrix<f64> {
        self.ext
            .get(&(host_dim, positions.to_vec()))
            .expect("extension pattern was precomputed")
    }

    /// Extends the ring bases to all hosts by a dimension-recursive
    /// minimum-norm solve subject to the trace constraints: the trace onto a
    /// face containing the subsimplex reproduces the lower extension, all
    /// other traces vanish.
    fn build_extensions(&mut self) -> Result<()> {
        for m in 0..=self.n {
            if self.ring_dim(m) == 0 {
                continue;
            }
            // Base pattern: the simplex inside itself.
            let full: Vec<u8> = (0..=m as u8).collect();
            self.ext.insert((m, full), self.ring[m].vectors.clone());
            for host in (m + 1)..=self.n {
                for positions in subsets_k(0, host as u8 + 1, m + 1) {
                    let ext = self.extend_pattern(host, &positions)?;
                    self.ext.insert((host, positions), ext);
                }
            }
        }
        Ok(())
    }

    fn extend_pattern(&self, host: usize, positions: &[u8]) -> Result<DMatrix<f64>> {
        let m = positions.len() - 1;
        let basis = &self.local[host];
        let nring = self.ring_dim(m);
        let mut rows: Vec<DMatrix<f64>> = Vec::new();
        let mut targets: Vec<DMatrix<f64>> = Vec::new();
        for fsize in 1..host {
            for g in subsets_k(0, host as u8 + 1, fsize + 1) {
                let fdim = fsize;
                if fdim < self.k {
                    // Traces of k-forms vanish identically below dimension k.
                    continue;
                }
                let gpos: Vec<usize> = g.iter().map(|&p| p as usize).collect();
                let (fcanon, t) = basis.canon.trace_matrix(&gpos);
                rows.push(t * &basis.vectors);
                let target = if positions.iter().all(|p| g.contains(p)) {
                    // Positions of the subsimplex within the face.
                    let inner: Vec<u8> = positions
                        .iter()
                        .map(|p| g.iter().position(|x| x == p).unwrap() as u8)
                        .collect();
                    if inner.len() == g.len() {
                        // The face is the subsimplex itself: prescribe the ring basis.
                        self.ring[m].vectors.clone()
                    } else {
                        self.ext
                            .get(&(fdim, inner))
                            .expect("lower-dimensional pattern precomputed")
                            .clone()
                    }
                } else {
                    DMatrix::zeros(fcanon.len(), nring)
                };
                targets.push(target);
            }
        }
        // Vertex constraints matter only for 0-forms; ring forms of a
        // positive-dimensional subsimplex vanish at its own vertices too.
        if self.k == 0 {
            for v in 0..=host as u8 {
                let (fcanon, t) = basis.canon.trace_matrix(&[v as usize]);
                rows.push(t * &basis.vectors);
                let target = if positions == [v] {
                    self.ring[0].vectors.clone()
                } else {
                    DMatrix::zeros(fcanon.len(), nring)
                };
                targets.push(target);
            }
        }
        let total_rows: usize = rows.iter().map(|b| b.nrows()).sum();
        let mut a = DMatrix::zeros(total_rows, basis.dim());
        let mut b = DMatrix::zeros(total_rows, nring);
        let mut at = 0;
        for (block, target) in rows.iter().zip(&targets) {
            a.view_mut((at, 0), (block.nrows(), block.ncols())).copy_from(block);
            b.view_mut((at, 0), (target.nrows(), target.ncols())).copy_from(target);
            at += block.nrows();
        }
        let mut out = DMatrix::zeros(basis.canon.len(), nring);
        for j in 0..nring {
            let rhs = b.column(j).into_owned();
            let (c, residual) = min_norm_solve(&a, &rhs, RANK_TOL);
            if residual > 1e-9 * (1.0 + rhs.norm()) {
                return Err(FeecError::NotABubble { residual });
            }
            out.set_column(j, &(&basis.vectors * c));
        }
        Ok(out)
    }
}

/// The assembled global finite element space over a complex, with the
/// boundary-part simplices excluded from the index set.
#[derive(Debug)]
pub struct GlobalFESpace {
    pub complex: Arc<SimplicialComplex>,
    pub family: Family,
    pub r: u32,
    pub k: usize,
    pub tables: Arc<ElementTables>,
    /// Global dof order: (simplex, ring index), ascending simplex id.
    pub dofs: Vec<(SimplexId, usize)>,
    pub index_of: HashMap<(SimplexId, usize), usize>,
    /// Per cell (position in `complex.cells()`): the restrictions of every
    /// global basis form supported on that cell.
    pub cell_tables: Vec<Vec<(usize, PolyForm)>>,
    pub cell_charts: Vec<Arc<Chart>>,
}

impl GlobalFESpace {
    pub fn dim(&self) -> usize {
        self.dofs.len()
    }

    pub fn cell_position(&self, t: SimplexId) -> usize {
        self.complex
            .cells()
            .binary_search(&t)
            .expect("cell belongs to the complex")
    }

    /// The restriction of a coefficient vector to one cell as a PolyForm.
    pub fn cell_form(&self, cell_pos: usize, coeffs: &DVector<f64>) -> PolyForm {
        let chart = &self.cell_charts[cell_pos];
        let mut acc = PolyForm::zero(chart.clone(), self.k);
        for (g, form) in &self.cell_tables[cell_pos] {
            let c = coeffs[*g];
            if c != 0.0 {
                acc = acc.add(&form.scale(c));
            }
        }
        acc
    }

    /// The restriction of a single global basis form to a cell, if supported.
    pub fn basis_on_cell(&self, cell_pos: usize, g: usize) -> Option<&PolyForm> {
        self.cell_tables[cell_pos]
            .iter()
            .find(|(idx, _)| *idx == g)
            .map(|(_, f)| f)
    }

    /// Host-local vertex positions of a subsimplex within a cell.
    pub fn positions_in(&self, sub: SimplexId, cell: SimplexId) -> Vec<u8> {
        let sv = &self.complex.simplex(sub).vertex_ids;
        let cv = &self.complex.simplex(cell).vertex_ids;
        sv.iter()
            .map(|v| cv.iter().position(|w| w == v).unwrap() as u8)
            .collect()
    }
}

/// Assembles the global space ⊕_{F ∉ 𝒰} Ext P̊Λ^k(F).
pub fn assemble_global(
    complex: &Arc<SimplicialComplex>,
    bc: &BoundarySubcomplex,
    family: Family,
    r: u32,
    k: usize,
    tables: Arc<ElementTables>,
) -> Result<GlobalFESpace> {
    let family = family.normalized(k, complex.n);
    assert_eq!(tables.family, family);
    assert_eq!(tables.r, r);
    assert_eq!(tables.k, k);
    let mut dofs = Vec::new();
    let mut index_of = HashMap::new();
    for s in complex.all_simplices() {
        if bc.contains(s.id) {
            continue;
        }
        for i in 0..tables.ring_dim(s.dim) {
            index_of.insert((s.id, i), dofs.len());
            dofs.push((s.id, i));
        }
    }
    let mut cell_tables = Vec::with_capacity(complex.cells().len());
    let mut cell_charts = Vec::with_capacity(complex.cells().len());
    for &t in complex.cells() {
        let chart = Chart::of_simplex(complex, t);
        let cell_verts = complex.simplex(t).vertex_ids.clone();
        let mut entries = Vec::new();
        for mask in 1u32..(1 << cell_verts.len()) {
            let positions: Vec<u8> = (0..cell_verts.len() as u8)
                .filter(|i| mask & (1 << i) != 0)
                .collect();
            let sub_verts: Vec<usize> = positions.iter().map(|&p| cell_verts[p as usize]).collect();
            let sub = complex.find(&sub_verts).expect("closed under subsimplices");
            let m = positions.len() - 1;
            let nring = tables.ring_dim(m);
            if nring == 0 || bc.contains(sub) {
                continue;
            }
            let ext = tables.extension(complex.n, &positions);
            for i in 0..nring {
                let g = index_of[&(sub, i)];
                let form = tables.local[complex.n]
                    .canon
                    .from_vec(&chart, &ext.column(i).into_owned());
                entries.push((g, form));
            }
        }
        entries.sort_by_key(|(g, _)| *g);
        cell_tables.push(entries);
        cell_charts.push(chart);
    }
    Ok(GlobalFESpace {
        complex: complex.clone(),
        family,
        r,
        k,
        tables,
        dofs,
        index_of,
        cell_tables,
        cell_charts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{unit_square_mesh, BoundarySubcomplex};

    fn binom(n: usize, k: usize) -> usize {
        if k > n {
            return 0;
        }
        let mut v = 1usize;
        for i in 0..k {
            v = v * (n - i) / (i + 1);
        }
        v
    }

    /// Independent rank oracle: evaluate the spanning forms at random points
    /// and compute the rank of the evaluation matrix by row reduction.
    fn evaluation_rank(forms: &[PolyForm]) -> usize {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        if forms.is_empty() {
            return 0;
        }
        let d = forms[0].chart.dim();
        let npoints = 4 * forms.len().max(4);
        let mut rows: Vec<Vec<f64>> = vec![Vec::new(); forms.len()];
        for _ in 0..npoints {
            let mut bary: Vec<f64> = (0..=d).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = bary.iter().sum();
            bary.iter_mut().for_each(|b| *b /= total);
            for (j, f) in forms.iter().enumerate() {
                rows[j].extend(f.eval_bary(&bary));
            }
        }
        // Gaussian elimination with partial pivoting on the forms-by-samples
        // matrix.
        let mut mat: Vec<Vec<f64>> = rows;
        let ncols = mat[0].len();
        let mut rank = 0;
        let mut col = 0;
        while rank < mat.len() && col < ncols {
            let (pivot, maxval) = (rank..mat.len())
                .map(|i| (i, mat[i][col].abs()))
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            if maxval < 1e-8 {
                col += 1;
                continue;
            }
            mat.swap(rank, pivot);
            for i in (rank + 1)..mat.len() {
                let f = mat[i][col] / mat[rank][col];
                for c in col..ncols {
                    mat[i][c] -= f * mat[rank][c];
                }
            }
            rank += 1;
            col += 1;
        }
        rank
    }

    #[test]
    fn full_space_dimensions_match_rank_oracle() {
        for d in 1..=3usize {
            let chart = Chart::reference(d);
            for r in 1..=3u32 {
                for k in 0..=d {
                    let basis = local_basis(&chart, Family::Full, r, k);
                    let span = spanning_forms(&chart, Family::Full, r, k);
                    let expected = binom(r as usize + d, d) * binom(d, k);
                    assert_eq!(basis.dim(), expected, "full d={d} r={r} k={k}");
                    assert_eq!(evaluation_rank(&span), expected);
                }
            }
        }
    }

    #[test]
    fn trimmed_space_dimensions_match_rank_oracle() {
        for d in 1..=3usize {
            let chart = Chart::reference(d);
            for r in 1..=3u32 {
                for k in 0..=d {
                    let basis = local_basis(&chart, Family::Trimmed, r, k);
                    let span = spanning_forms(&chart, Family::Trimmed, r, k);
                    let expected = if k == 0 {
                        binom(r as usize + d, d)
                    } else {
                        binom(r as usize + k - 1, k) * binom(d + r as usize, d - k)
                    };
                    assert_eq!(basis.dim(), expected, "trimmed d={d} r={r} k={k}");
                    assert_eq!(evaluation_rank(&span), expected);
                }
            }
        }
    }

    #[test]
    fn hat_functions_and_whitney_edges() {
        let chart = Chart::reference(2);
        let p1 = local_basis(&chart, Family::Full, 1, 0);
        assert_eq!(p1.dim(), 3);
        let whitney = local_basis(&chart, Family::Trimmed, 1, 1);
        assert_eq!(whitney.dim(), 3);
    }

    #[test]
    fn inclusion_chain() {
        for d in 2..=3usize {
            let chart = Chart::reference(d);
            for k in 0..=d {
                for r in 1..=2u32 {
                    let full_r = local_basis(&chart, Family::Full, r, k);
                    let trim_r1 = local_basis(&chart, Family::Trimmed, r + 1, k);
                    let full_r1 = local_basis(&chart, Family::Full, r + 1, k);
                    // Embed everything at homogeneous degree r+1.
                    let canon = CanonSpace::new(d, r + 1, k);
                    let mut a = DMatrix::zeros(canon.len(), full_r.dim());
                    for (j, f) in full_r.forms.iter().enumerate() {
                        a.set_column(j, &canon.to_vec(f));
                    }
                    let qa = orthonormal_columns(&a, RANK_TOL);
                    for j in 0..qa.ncols() {
                        let r1 = crate::linalg::membership_residual(
                            &qa.column(j).into_owned(),
                            &trim_r1.vectors,
                        );
                        assert!(r1 < 1e-9, "P_r ⊆ P⁻_(r+1): {r1:.2e}");
                    }
                    for j in 0..trim_r1.vectors.ncols() {
                        let r2 = crate::linalg::membership_residual(
                            &trim_r1.vectors.column(j).into_owned(),
                            &full_r1.vectors,
                        );
                        assert!(r2 < 1e-9, "P⁻_(r+1) ⊆ P_(r+1): {r2:.2e}");
                    }
                }
            }
        }
    }

    #[test]
    fn derivative_image_spaces() {
        // dP_{r+1}Λ^k = dP⁻_{r+1}Λ^k ⊆ P_rΛ^{k+1}.
        for d in 2..=3usize {
            let chart = Chart::reference(d);
            for k in 0..d {
                for r in 1..=2u32 {
                    let full = local_basis(&chart, Family::Full, r + 1, k);
                    let trim = local_basis(&chart, Family::Trimmed, r + 1, k);
                    let canon = CanonSpace::new(d, r, k + 1);
                    let dmat = |basis: &LocalBasis| {
                        let mut m = DMatrix::zeros(canon.len(), basis.dim());
                        for (j, f) in basis.forms.iter().enumerate() {
                            m.set_column(j, &canon.to_vec(&f.exterior_derivative()));
                        }
                        m
                    };
                    let dfull = dmat(&full);
                    let dtrim = dmat(&trim);
                    let res = mutual_span_residual(&dfull, &dtrim, RANK_TOL);
                    assert!(res < 1e-9, "dP = dP⁻ failed: {res:.2e}");
                    let target = local_basis(&chart, Family::Full, r, k + 1);
                    let q = orthonormal_columns(&dfull, RANK_TOL);
                    for j in 0..q.ncols() {
                        let res = crate::linalg::membership_residual(
                            &q.column(j).into_owned(),
                            &target.vectors,
                        );
                        assert!(res < 1e-9, "dP ⊆ P_rΛ^(k+1) failed: {res:.2e}");
                    }
                }
            }
        }
    }

    #[test]
    fn koszul_whitney_equivalence() {
        let tri = Chart::reference(2);
        assert!(koszul_space_equivalence(&tri, 1, 1) < 1e-9);
        let tet = Chart::reference(3);
        assert!(koszul_space_equivalence(&tet, 2, 1) < 1e-9);
        assert!(koszul_space_equivalence(&tet, 1, 2) < 1e-9);
        // k = 0: both constructions give P_rΛ⁰.
        assert!(koszul_space_equivalence(&tri, 2, 0) < 1e-9);
    }

    #[test]
    fn ring_dimensions() {
        let tri = Chart::reference(2);
        // No linear interior bubbles.
        assert_eq!(ring_basis(&tri, Family::Full, 1, 0).dim(), 0);
        // The cubic bubble λ₀λ₁λ₂.
        assert_eq!(ring_basis(&tri, Family::Full, 3, 0).dim(), 1);
        // Whitney form on an edge.
        let edge = Chart::reference(1);
        assert_eq!(ring_basis(&edge, Family::Trimmed, 1, 1).dim(), 1);
    }

    #[test]
    fn ring_traces_vanish() {
        for d in 1..=3usize {
            let chart = Chart::reference(d);
            for family in [Family::Full, Family::Trimmed] {
                for r in 1..=2u32 {
                    for k in 0..=d {
                        let ring = ring_basis(&chart, family, r, k);
                        for form in &ring.forms {
                            for fsize in 1..=d {
                                for g in subsets_k(0, d as u8 + 1, fsize) {
                                    if g.len() == d + 1 {
                                        continue;
                                    }
                                    let gpos: Vec<usize> =
                                        g.iter().map(|&p| p as usize).collect();
                                    let fchart = Chart::reference(gpos.len() - 1);
                                    let tr = form.trace(&fchart, &gpos).unwrap();
                                    assert!(
                                        tr.coeff_norm() < 1e-10,
                                        "d={d} r={r} k={k} {family:?} face {g:?}"
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn extension_trace_properties() {
        // Extend each ring basis form from every face pattern of a triangle
        // and tetrahedron; the trace back must reproduce it and all other
        // traces must vanish.
        for n in 2..=3usize {
            for (family, r, k) in [
                (Family::Full, 1u32, 0usize),
                (Family::Full, 2, 0),
                (Family::Trimmed, 1, 1),
                (Family::Full, 2, 1),
            ] {
                if k > n {
                    continue;
                }
                let tables = ElementTables::build(family, r, k, n).unwrap();
                let chart = Chart::reference(n);
                for m in 0..n {
                    if tables.ring_dim(m) == 0 {
                        continue;
                    }
                    for positions in subsets_k(0, n as u8 + 1, m + 1) {
                        let ext = tables.extension(n, &positions);
                        for i in 0..tables.ring_dim(m) {
                            let form = tables.local[n]
                                .canon
                                .from_vec(&chart, &ext.column(i).into_owned());
                            // Trace back to the subsimplex.
                            let pos: Vec<usize> =
                                positions.iter().map(|&p| p as usize).collect();
                            let fchart = Chart::reference(m);
                            let tr = form.trace(&fchart, &pos).unwrap();
                            let expect = &tables.ring[m].forms[i];
                            assert!(
                                tr.coeff_distance(expect) < 1e-9,
                                "tr∘Ext = id failed n={n} {family:?} r={r} k={k}"
                            );
                            // Vanishing on faces not containing the pattern.
                            for fsize in k.max(1)..=n {
                                for g in subsets_k(0, n as u8 + 1, fsize) {
                                    if g.len() == n + 1
                                        || positions.iter().all(|p| g.contains(p))
                                    {
                                        continue;
                                    }
                                    let gpos: Vec<usize> =
                                        g.iter().map(|&p| p as usize).collect();
                                    let gchart = Chart::reference(gpos.len() - 1);
                                    let tr = form.trace(&gchart, &gpos).unwrap();
                                    assert!(
                                        tr.coeff_norm() < 1e-10,
                                        "Ext trace should vanish on {g:?}"
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn global_dimensions_on_unit_square() {
        let complex = Arc::new(unit_square_mesh(0));
        let no_bc = BoundarySubcomplex::empty();

        let tables = Arc::new(ElementTables::build(Family::Full, 1, 0, 2).unwrap());
        let p1 = assemble_global(&complex, &no_bc, Family::Full, 1, 0, tables).unwrap();
        assert_eq!(p1.dim(), 4);

        let tables = Arc::new(ElementTables::build(Family::Trimmed, 1, 1, 2).unwrap());
        let whitney =
            assemble_global(&complex, &no_bc, Family::Trimmed, 1, 1, tables.clone()).unwrap();
        assert_eq!(whitney.dim(), 5);

        let boundary = complex.full_boundary();
        let whitney_bc =
            assemble_global(&complex, &boundary, Family::Trimmed, 1, 1, tables).unwrap();
        assert_eq!(whitney_bc.dim(), 1);
    }

    #[test]
    fn global_continuity_across_facets() {
        let complex = Arc::new(unit_square_mesh(1));
        let no_bc = BoundarySubcomplex::empty();
        for (family, r, k) in [
            (Family::Full, 2u32, 0usize),
            (Family::Trimmed, 1, 1),
            (Family::Full, 1, 1),
        ] {
            let tables = Arc::new(ElementTables::build(family, r, k, 2).unwrap());
            let space = assemble_global(&complex, &no_bc, family, r, k, tables).unwrap();
            for &f in complex.simplices_of_dim(1) {
                let owners = complex.containing_cells(f);
                if owners.len() != 2 {
                    continue;
                }
                let fchart = Chart::of_simplex(&complex, f);
                for g in 0..space.dim() {
                    let pos_a = space.cell_position(owners[0]);
                    let pos_b = space.cell_position(owners[1]);
                    let left = space.basis_on_cell(pos_a, g);
                    let right = space.basis_on_cell(pos_b, g);
                    let keep_a: Vec<usize> = space
                        .positions_in(f, owners[0])
                        .iter()
                        .map(|&p| p as usize)
                        .collect();
                    let keep_b: Vec<usize> = space
                        .positions_in(f, owners[1])
                        .iter()
                        .map(|&p| p as usize)
                        .collect();
                    let tr_a = left
                        .map(|x| x.trace(&fchart, &keep_a).unwrap())
                        .unwrap_or_else(|| PolyForm::zero(fchart.clone(), k));
                    let tr_b = right
                        .map(|x| x.trace(&fchart, &keep_b).unwrap())
                        .unwrap_or_else(|| PolyForm::zero(fchart.clone(), k));
                    assert!(
                        tr_a.coeff_distance(&tr_b) < 1e-10,
                        "facet continuity {family:?} r={r} k={k}"
                    );
                }
            }
        }
    }
}
