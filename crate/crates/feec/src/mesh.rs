//! Simplicial complexes: subsimplex lattice, orientations, patches, shape
//! measures, anchors, and uniform red refinement.
//!
//! Simplices are identified by flat ids assigned dimension by dimension, with
//! ascending vertex lists as the canonical representation. The reference
//! orientation of a simplex is the ascending-vertex-order orientation, except
//! for full-dimensional cells whose fixed orientation is the ambient positive
//! one; the combinatorial incidence sign `o(F,T)` is computed against these
//! fixed orientations.

use std::collections::{HashMap, HashSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FeecError, Result};

/// Handle of a simplex within its complex. Ids are assigned in ascending
/// dimension order and lexicographically within a dimension, so they are
/// deterministic for a given input mesh.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SimplexId(pub usize);

/// A single simplex of the complex.
#[derive(Clone, Debug)]
pub struct Simplex {
    pub id: SimplexId,
    /// Strictly increasing global vertex indices.
    pub vertex_ids: Vec<usize>,
    pub dim: usize,
    /// Fixed orientation relative to the ascending-vertex ordering: +1 for
    /// all simplices of dimension < n, the sign of the edge-matrix
    /// determinant for n-cells.
    pub orientation_sign: i8,
}

/// Star and containment patches of a simplex, Eq.-level data for the
/// interpolation operators.
#[derive(Clone, Debug)]
pub struct Patch {
    pub anchor: SimplexId,
    /// Cells T' with T' ∩ anchor ≠ ∅ (the set U*).
    pub star_cells: Vec<SimplexId>,
    /// Cells T' ⊇ anchor (the set U).
    pub containing_cells: Vec<SimplexId>,
}

/// A subcomplex of simplices of dimension ≤ n−1, closed under subsimplices.
/// Used to mark the boundary part carrying homogeneous boundary conditions.
#[derive(Clone, Debug, Default)]
pub struct BoundarySubcomplex {
    members: HashSet<SimplexId>,
}

impl BoundarySubcomplex {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn contains(&self, s: SimplexId) -> bool {
        self.members.contains(&s)
    }

    pub fn members(&self) -> impl Iterator<Item = SimplexId> + '_ {
        self.members.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Anchor facet F_S and anchor cell T_S for every simplex of dimension ≤ n−1.
#[derive(Clone, Debug)]
pub struct AnchorChoice {
    /// (F_S, T_S) indexed by flat simplex id; `None` for n-cells.
    anchors: Vec<Option<(SimplexId, SimplexId)>>,
}

impl AnchorChoice {
    pub fn anchor(&self, s: SimplexId) -> Option<(SimplexId, SimplexId)> {
        self.anchors[s.0]
    }
}

/// A conforming simplicial complex with its full subsimplex lattice.
#[derive(Clone, Debug)]
pub struct SimplicialComplex {
    /// Ambient (and top) dimension.
    pub n: usize,
    /// Vertex coordinates in ℝⁿ.
    pub vertex_coords: Vec<Vec<f64>>,
    simplices: Vec<Simplex>,
    /// Per-dimension id lists.
    by_dim: Vec<Vec<SimplexId>>,
    /// Vertex-id list → simplex id.
    lookup: HashMap<Vec<usize>, SimplexId>,
    /// For each simplex, the cells containing it (ascending id order).
    containing: Vec<Vec<SimplexId>>,
    /// For each cell, its facets with incidence signs o(F,T).
    cell_facets: Vec<Vec<(SimplexId, i8)>>,
    /// Minimum adjacent edge length per vertex (h_V; stored, unused by the
    /// algorithms).
    pub vertex_min_edge: Vec<f64>,
}

const DEGENERACY_TOL: f64 = 1e-12;

impl SimplicialComplex {
    pub fn simplex(&self, id: SimplexId) -> &Simplex {
        &self.simplices[id.0]
    }

    pub fn num_simplices(&self) -> usize {
        self.simplices.len()
    }

    pub fn simplices_of_dim(&self, d: usize) -> &[SimplexId] {
        &self.by_dim[d]
    }

    pub fn all_simplices(&self) -> impl Iterator<Item = &Simplex> {
        self.simplices.iter()
    }

    pub fn cells(&self) -> &[SimplexId] {
        &self.by_dim[self.n]
    }

    /// Looks up a simplex by its (not necessarily sorted) vertex ids.
    pub fn find(&self, vertex_ids: &[usize]) -> Option<SimplexId> {
        let mut key = vertex_ids.to_vec();
        key.sort_unstable();
        self.lookup.get(&key).copied()
    }

    /// Cells containing the given simplex, in ascending id order.
    pub fn containing_cells(&self, s: SimplexId) -> &[SimplexId] {
        &self.containing[s.0]
    }

    /// Facets of a cell with their incidence signs o(F,T).
    pub fn facets_of_cell(&self, t: SimplexId) -> &[(SimplexId, i8)] {
        let cell = self.simplex(t);
        assert_eq!(cell.dim, self.n, "facet incidence is stored for cells");
        let cell_pos = self.by_dim[self.n]
            .binary_search(&t)
            .expect("cell belongs to the complex");
        &self.cell_facets[cell_pos]
    }

    /// Incidence sign o(F,T) for a facet F of cell T.
    pub fn incidence(&self, facet: SimplexId, cell: SimplexId) -> Option<i8> {
        self.facets_of_cell(cell)
            .iter()
            .find(|(f, _)| *f == facet)
            .map(|(_, s)| *s)
    }

    pub fn is_subsimplex(&self, sub: SimplexId, sup: SimplexId) -> bool {
        let a = &self.simplex(sub).vertex_ids;
        let b = &self.simplex(sup).vertex_ids;
        is_subset(a, b)
    }

    /// Coordinates of the simplex vertices, one row per vertex.
    pub fn coords_of(&self, s: SimplexId) -> Vec<Vec<f64>> {
        self.simplex(s)
            .vertex_ids
            .iter()
            .map(|&v| self.vertex_coords[v].clone())
            .collect()
    }

    /// Diameter h_S (maximum pairwise vertex distance).
    pub fn diameter(&self, s: SimplexId) -> f64 {
        let pts = self.coords_of(s);
        let mut h: f64 = 0.0;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                h = h.max(dist(&pts[i], &pts[j]));
            }
        }
        h
    }

    /// d-dimensional Hausdorff volume of a simplex.
    pub fn volume(&self, s: SimplexId) -> f64 {
        let pts = self.coords_of(s);
        simplex_volume(&pts)
    }

    /// Shape measure μ(S) = h_S^d / vol^d(S) for dim(S) ≥ 1.
    pub fn shape_measure(&self, s: SimplexId) -> Result<f64> {
        let sx = self.simplex(s);
        if sx.dim == 0 {
            return Err(FeecError::DegenerateSimplex(
                "shape measure needs dim ≥ 1".into(),
            ));
        }
        let vol = self.volume(s);
        if vol <= DEGENERACY_TOL {
            return Err(FeecError::DegenerateSimplex(format!(
                "simplex {} has volume {vol:.3e}",
                s.0
            )));
        }
        Ok(self.diameter(s).powi(sx.dim as i32) / vol)
    }

    /// Complex-wide shape measure: max over all non-vertex simplices.
    pub fn shape_measure_complex(&self) -> f64 {
        let mut mu: f64 = 0.0;
        for d in 1..=self.n {
            for &s in &self.by_dim[d] {
                mu = mu.max(self.shape_measure(s).unwrap_or(f64::INFINITY));
            }
        }
        mu
    }

    /// Maximum cell diameter.
    pub fn h_max(&self) -> f64 {
        self.cells()
            .iter()
            .map(|&t| self.diameter(t))
            .fold(0.0, f64::max)
    }

    /// Star and containment patches of a simplex.
    pub fn patches(&self, s: SimplexId) -> Result<Patch> {
        if s.0 >= self.simplices.len() {
            return Err(FeecError::UnknownSimplex(s.0));
        }
        let verts: HashSet<usize> = self.simplex(s).vertex_ids.iter().copied().collect();
        let mut star: Vec<SimplexId> = self
            .cells()
            .iter()
            .copied()
            .filter(|&t| self.simplex(t).vertex_ids.iter().any(|v| verts.contains(v)))
            .collect();
        star.sort_unstable();
        Ok(Patch {
            anchor: s,
            star_cells: star,
            containing_cells: self.containing[s.0].clone(),
        })
    }

    /// Breadth-first facet path between two cells around a shared simplex S:
    /// a sequence of (cell, crossing facet) pairs starting after `t0`, where
    /// every crossing facet contains S. Empty when `t0 == t`.
    pub fn face_path(
        &self,
        t0: SimplexId,
        t: SimplexId,
        s: SimplexId,
    ) -> Result<Vec<(SimplexId, SimplexId)>> {
        if !self.is_subsimplex(s, t0) || !self.is_subsimplex(s, t) {
            return Err(FeecError::NotASubsimplex);
        }
        if t0 == t {
            return Ok(Vec::new());
        }
        // BFS restricted to cells containing S.
        let candidates = &self.containing[s.0];
        let mut prev: HashMap<SimplexId, (SimplexId, SimplexId)> = HashMap::new();
        let mut queue = VecDeque::from([t0]);
        let mut seen: HashSet<SimplexId> = HashSet::from([t0]);
        'bfs: while let Some(cur) = queue.pop_front() {
            for &(f, _) in self.facets_of_cell(cur) {
                if !self.is_subsimplex(s, f) {
                    continue;
                }
                for &next in self.containing_cells(f) {
                    if next != cur && candidates.contains(&next) && seen.insert(next) {
                        prev.insert(next, (cur, f));
                        if next == t {
                            break 'bfs;
                        }
                        queue.push_back(next);
                    }
                }
            }
        }
        if !prev.contains_key(&t) {
            return Err(FeecError::NotFaceConnected(s.0));
        }
        let mut path = Vec::new();
        let mut cur = t;
        while cur != t0 {
            let (before, facet) = prev[&cur];
            path.push((cur, facet));
            cur = before;
        }
        path.reverse();
        Ok(path)
    }

    /// Fixes anchors (F_S, T_S) for every simplex of dimension ≤ n−1.
    /// Boundary-part simplices get boundary-part facets; ties break on the
    /// lowest simplex id.
    pub fn choose_anchors(&self, boundary: &BoundarySubcomplex) -> Result<AnchorChoice> {
        let mut anchors = vec![None; self.simplices.len()];
        for d in 0..self.n {
            for &s in &self.by_dim[d] {
                let candidates: Vec<SimplexId> = self.by_dim[self.n - 1]
                    .iter()
                    .copied()
                    .filter(|&f| self.is_subsimplex(s, f))
                    .collect();
                let facet = if boundary.contains(s) {
                    candidates
                        .iter()
                        .copied()
                        .find(|&f| boundary.contains(f))
                        .ok_or(FeecError::NoAdmissibleAnchor(s.0))?
                } else {
                    *candidates.first().ok_or(FeecError::UnknownSimplex(s.0))?
                };
                let cell = *self
                    .containing_cells(facet)
                    .first()
                    .ok_or(FeecError::UnknownSimplex(facet.0))?;
                anchors[s.0] = Some((facet, cell));
            }
        }
        Ok(AnchorChoice { anchors })
    }

    /// Builds the boundary subcomplex generated by a set of (n−1)-facets,
    /// closing it under subsimplices.
    pub fn subcomplex_from_facets(&self, facets: &[Vec<usize>]) -> Result<BoundarySubcomplex> {
        let mut members = HashSet::new();
        for f in facets {
            let id = self
                .find(f)
                .ok_or_else(|| FeecError::UnknownSimplex(usize::MAX))?;
            if self.simplex(id).dim != self.n - 1 {
                return Err(FeecError::NotASubsimplex);
            }
            for sub in subsets_nonempty(&self.simplex(id).vertex_ids) {
                members.insert(self.find(&sub).expect("closure exists in the complex"));
            }
        }
        Ok(BoundarySubcomplex { members })
    }

    /// All facets lying in exactly one cell, i.e. the full domain boundary.
    pub fn boundary_facets(&self) -> Vec<Vec<usize>> {
        self.by_dim[self.n - 1]
            .iter()
            .filter(|&&f| self.containing_cells(f).len() == 1)
            .map(|&f| self.simplex(f).vertex_ids.clone())
            .collect()
    }

    /// The boundary subcomplex of the full domain boundary.
    pub fn full_boundary(&self) -> BoundarySubcomplex {
        self.subcomplex_from_facets(&self.boundary_facets())
            .expect("boundary facets exist in the complex")
    }

    /// Uniform red refinement: each cell splits into 2ⁿ children through the
    /// edge midpoints (Freudenthal/Bey diagonal in 3D).
    pub fn refine_uniform(&self) -> Result<SimplicialComplex> {
        let mut coords = self.vertex_coords.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        for &e in &self.by_dim[1] {
            let vs = &self.simplex(e).vertex_ids;
            let m: Vec<f64> = self.vertex_coords[vs[0]]
                .iter()
                .zip(&self.vertex_coords[vs[1]])
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            midpoint.insert((vs[0], vs[1]), coords.len());
            coords.push(m);
        }
        let mid = |a: usize, b: usize| -> usize {
            let key = if a < b { (a, b) } else { (b, a) };
            midpoint[&key]
        };
        let mut cells = Vec::new();
        for &t in self.cells() {
            let v = &self.simplex(t).vertex_ids;
            match self.n {
                1 => {
                    let m = mid(v[0], v[1]);
                    cells.push(vec![v[0], m]);
                    cells.push(vec![m, v[1]]);
                }
                2 => {
                    let (m01, m02, m12) = (mid(v[0], v[1]), mid(v[0], v[2]), mid(v[1], v[2]));
                    cells.push(vec![v[0], m01, m02]);
                    cells.push(vec![v[1], m01, m12]);
                    cells.push(vec![v[2], m02, m12]);
                    cells.push(vec![m01, m02, m12]);
                }
                3 => {
                    let m01 = mid(v[0], v[1]);
                    let m02 = mid(v[0], v[2]);
                    let m03 = mid(v[0], v[3]);
                    let m12 = mid(v[1], v[2]);
                    let m13 = mid(v[1], v[3]);
                    let m23 = mid(v[2], v[3]);
                    // Corner tetrahedra.
                    cells.push(vec![v[0], m01, m02, m03]);
                    cells.push(vec![v[1], m01, m12, m13]);
                    cells.push(vec![v[2], m02, m12, m23]);
                    cells.push(vec![v[3], m03, m13, m23]);
                    // The interior octahedron splits along one of its three
                    // diagonals. The split is interior to the parent, so any
                    // choice conforms; take the one minimizing the worst
                    // child shape measure, breaking ties towards an even
                    // quality distribution. Both keys are similarity
                    // invariants, so structured meshes refine self-similarly.
                    let diagonals = [
                        ((m01, m23), (m02, m13), (m03, m12)),
                        ((m02, m13), (m01, m23), (m03, m12)),
                        ((m03, m12), (m01, m23), (m02, m13)),
                    ];
                    let mut best: Option<(f64, f64, Vec<Vec<usize>>)> = None;
                    for ((d1, d2), (a1, a2), (b1, b2)) in diagonals {
                        let mut children: Vec<Vec<usize>> = Vec::with_capacity(4);
                        for x in [a1, a2] {
                            for y in [b1, b2] {
                                children.push(vec![d1, d2, x, y]);
                            }
                        }
                        let mus: Vec<f64> = children
                            .iter()
                            .map(|c| {
                                let pts: Vec<Vec<f64>> =
                                    c.iter().map(|&w| coords[w].clone()).collect();
                                let vol = simplex_volume(&pts);
                                if vol <= DEGENERACY_TOL {
                                    return f64::INFINITY;
                                }
                                let mut h: f64 = 0.0;
                                for i in 0..4 {
                                    for j in (i + 1)..4 {
                                        h = h.max(dist(&pts[i], &pts[j]));
                                    }
                                }
                                h.powi(3) / vol
                            })
                            .collect();
                        let worst = mus.iter().fold(0.0f64, |a, &b| a.max(b));
                        let spread = worst - mus.iter().fold(f64::INFINITY, |a, &b| a.min(b));
                        let replace = match &best {
                            None => true,
                            Some((w, s, _)) => {
                                worst < w - 1e-9 * w
                                    || (worst <= w + 1e-9 * w && spread < s - 1e-9 * (1.0 + s))
                            }
                        };
                        if replace {
                            best = Some((worst, spread, children));
                        }
                    }
                    cells.extend(best.expect("one diagonal candidate").2);
                }
                n => panic!("refinement implemented for n ≤ 3, got {n}"),
            }
        }
        build_complex(coords, cells)
    }
}

/// Builds a conforming simplicial complex from vertex coordinates and top
/// cells, enumerating the full subsimplex lattice and verifying conformity
/// and face-connectedness.
pub fn build_complex(
    vertex_coords: Vec<Vec<f64>>,
    top_cells: Vec<Vec<usize>>,
) -> Result<SimplicialComplex> {
    let n = vertex_coords
        .first()
        .map(|c| c.len())
        .unwrap_or_default();
    assert!(n >= 1, "ambient dimension must be at least 1");
    assert!(
        vertex_coords.iter().all(|c| c.len() == n),
        "all vertices need {n} coordinates"
    );

    // Canonicalize cells to ascending vertex order and record orientation.
    let mut cell_verts: Vec<Vec<usize>> = Vec::with_capacity(top_cells.len());
    let mut cell_signs: Vec<i8> = Vec::with_capacity(top_cells.len());
    for cell in &top_cells {
        assert_eq!(cell.len(), n + 1, "top cells must be n-simplices");
        let mut sorted = cell.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != n + 1 {
            return Err(FeecError::DegenerateSimplex(format!(
                "cell {cell:?} repeats a vertex"
            )));
        }
        let pts: Vec<&[f64]> = sorted.iter().map(|&v| vertex_coords[v].as_slice()).collect();
        let det = edge_determinant(&pts);
        if det.abs() <= DEGENERACY_TOL {
            return Err(FeecError::DegenerateSimplex(format!(
                "cell {cell:?} has edge determinant {det:.3e}"
            )));
        }
        cell_signs.push(if det > 0.0 { 1 } else { -1 });
        cell_verts.push(sorted);
    }

    // Enumerate subsimplices dimension by dimension, deterministically.
    let mut per_dim_sets: Vec<HashSet<Vec<usize>>> = vec![HashSet::new(); n + 1];
    for verts in &cell_verts {
        for sub in subsets_nonempty(verts) {
            per_dim_sets[sub.len() - 1].insert(sub);
        }
    }
    let mut simplices: Vec<Simplex> = Vec::new();
    let mut by_dim: Vec<Vec<SimplexId>> = vec![Vec::new(); n + 1];
    let mut lookup: HashMap<Vec<usize>, SimplexId> = HashMap::new();
    for d in 0..=n {
        let mut items: Vec<Vec<usize>> = per_dim_sets[d].drain().collect();
        items.sort();
        for verts in items {
            let id = SimplexId(simplices.len());
            let sign = if d == n {
                let key_pos = cell_verts.iter().position(|c| *c == verts);
                key_pos.map(|p| cell_signs[p]).unwrap_or(1)
            } else {
                1
            };
            lookup.insert(verts.clone(), id);
            by_dim[d].push(id);
            simplices.push(Simplex {
                id,
                vertex_ids: verts,
                dim: d,
                orientation_sign: sign,
            });
        }
    }

    // Containing-cell incidence.
    let mut containing: Vec<Vec<SimplexId>> = vec![Vec::new(); simplices.len()];
    for &t in &by_dim[n] {
        let verts = simplices[t.0].vertex_ids.clone();
        for sub in subsets_nonempty(&verts) {
            containing[lookup[&sub].0].push(t);
        }
    }
    for list in &mut containing {
        list.sort_unstable();
    }

    // Facet incidence with signs o(F,T).
    let mut cell_facets: Vec<Vec<(SimplexId, i8)>> = Vec::with_capacity(by_dim[n].len());
    for &t in &by_dim[n] {
        let cell = &simplices[t.0];
        let mut facets = Vec::with_capacity(n + 1);
        for opposite in 0..=n {
            let fverts: Vec<usize> = cell
                .vertex_ids
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != opposite)
                .map(|(_, &v)| v)
                .collect();
            let f = lookup[&fverts];
            let sign = cell.orientation_sign * if opposite % 2 == 0 { 1 } else { -1 };
            facets.push((f, sign));
        }
        cell_facets.push(facets);
    }

    // Conformity: interior facets must pair exactly two cells with opposite
    // induced orientations, and no vertex may sit inside a foreign cell.
    for &f in &by_dim[n - 1] {
        let owners = &containing[f.0];
        if owners.len() > 2 {
            return Err(FeecError::NonconformingMesh {
                cell_a: owners[0].0,
                cell_b: owners[2].0,
            });
        }
        if owners.len() == 2 {
            let cell_pos_a = by_dim[n].binary_search(&owners[0]).unwrap();
            let cell_pos_b = by_dim[n].binary_search(&owners[1]).unwrap();
            let sa = cell_facets[cell_pos_a].iter().find(|(x, _)| *x == f).unwrap().1;
            let sb = cell_facets[cell_pos_b].iter().find(|(x, _)| *x == f).unwrap().1;
            if sa * sb != -1 {
                return Err(FeecError::NonconformingMesh {
                    cell_a: owners[0].0,
                    cell_b: owners[1].0,
                });
            }
        }
    }
    for (v, coord) in vertex_coords.iter().enumerate() {
        for (pos, verts) in cell_verts.iter().enumerate() {
            if verts.contains(&v) {
                continue;
            }
            let pts: Vec<&[f64]> = verts.iter().map(|&w| vertex_coords[w].as_slice()).collect();
            if let Some(bary) = barycentric_in_cell(&pts, coord) {
                if bary.iter().all(|&b| b > 1e-9) || bary.iter().all(|&b| b > -1e-9) {
                    // Strictly inside, or on the closure: a hanging node.
                    return Err(FeecError::NonconformingMesh {
                        cell_a: pos,
                        cell_b: pos,
                    });
                }
            }
        }
    }

    let mut vertex_min_edge = vec![f64::INFINITY; vertex_coords.len()];
    for &e in &by_dim[1] {
        let vs = &simplices[e.0].vertex_ids;
        let len = dist(&vertex_coords[vs[0]], &vertex_coords[vs[1]]);
        vertex_min_edge[vs[0]] = vertex_min_edge[vs[0]].min(len);
        vertex_min_edge[vs[1]] = vertex_min_edge[vs[1]].min(len);
    }

    let complex = SimplicialComplex {
        n,
        vertex_coords,
        simplices,
        by_dim,
        lookup,
        containing,
        cell_facets,
        vertex_min_edge,
    };

    // Face-connectedness around every shared simplex, verified eagerly.
    for d in 0..n {
        for &s in &complex.by_dim[d] {
            let cells = complex.containing_cells(s);
            if cells.len() <= 1 {
                continue;
            }
            for &t in &cells[1..] {
                complex.face_path(cells[0], t, s)?;
            }
        }
    }
    Ok(complex)
}

/// Uniform-grid point locator over the cells of a complex.
#[derive(Debug)]
pub struct PointLocator {
    spacing: f64,
    bins: HashMap<Vec<i64>, Vec<usize>>,
}

impl PointLocator {
    pub fn build(complex: &SimplicialComplex) -> PointLocator {
        let spacing = complex.h_max().max(1e-12);
        let mut bins: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (pos, &t) in complex.cells().iter().enumerate() {
            let pts = complex.coords_of(t);
            let n = complex.n;
            let mut lo = vec![f64::INFINITY; n];
            let mut hi = vec![f64::NEG_INFINITY; n];
            for p in &pts {
                for i in 0..n {
                    lo[i] = lo[i].min(p[i]);
                    hi[i] = hi[i].max(p[i]);
                }
            }
            let lo_bin: Vec<i64> = lo.iter().map(|v| (v / spacing).floor() as i64).collect();
            let hi_bin: Vec<i64> = hi.iter().map(|v| (v / spacing).floor() as i64).collect();
            let mut stack = vec![lo_bin.clone()];
            let mut seen = HashSet::new();
            while let Some(b) = stack.pop() {
                if !seen.insert(b.clone()) {
                    continue;
                }
                bins.entry(b.clone()).or_default().push(pos);
                for i in 0..n {
                    if b[i] < hi_bin[i] {
                        let mut nb = b.clone();
                        nb[i] += 1;
                        stack.push(nb);
                    }
                }
            }
        }
        for list in bins.values_mut() {
            list.sort_unstable();
            list.dedup();
        }
        PointLocator { spacing, bins }
    }

    /// Position (within `complex.cells()`) of a cell whose closure contains
    /// the point, preferring the lowest cell id.
    pub fn locate(&self, complex: &SimplicialComplex, x: &[f64]) -> Option<usize> {
        let bin: Vec<i64> = x.iter().map(|v| (v / self.spacing).floor() as i64).collect();
        let candidates = self.bins.get(&bin)?;
        for &pos in candidates {
            let t = complex.cells()[pos];
            let pts = complex.coords_of(t);
            let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
            if let Some(bary) = barycentric_in_cell(&refs, x) {
                if bary.iter().all(|&b| b >= -1e-10) {
                    return Some(pos);
                }
            }
        }
        None
    }
}

/// JSON mesh file: vertices, cells, and generating boundary facets.
#[derive(Debug, Serialize, Deserialize)]
pub struct MeshFile {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub cells: Vec<Vec<usize>>,
    #[serde(default)]
    pub boundary_facets: Vec<Vec<usize>>,
}

impl MeshFile {
    pub fn build(&self) -> Result<(SimplicialComplex, BoundarySubcomplex)> {
        let complex = build_complex(self.vertices.clone(), self.cells.clone())?;
        let boundary = if self.boundary_facets.is_empty() {
            BoundarySubcomplex::empty()
        } else {
            complex.subcomplex_from_facets(&self.boundary_facets)?
        };
        Ok((complex, boundary))
    }

    pub fn from_complex(complex: &SimplicialComplex, boundary: &BoundarySubcomplex) -> Self {
        MeshFile {
            dim: complex.n,
            vertices: complex.vertex_coords.clone(),
            cells: complex
                .cells()
                .iter()
                .map(|&t| complex.simplex(t).vertex_ids.clone())
                .collect(),
            boundary_facets: complex
                .all_simplices()
                .filter(|s| s.dim + 1 == complex.n && boundary.contains(s.id))
                .map(|s| s.vertex_ids.clone())
                .collect(),
        }
    }
}

/// Two-triangle mesh of the unit square, refined `levels` times.
pub fn unit_square_mesh(levels: usize) -> SimplicialComplex {
    let coords = vec![
        vec![0.0, 0.0],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![1.0, 1.0],
    ];
    let cells = vec![vec![0, 1, 3], vec![0, 3, 2]];
    let mut complex = build_complex(coords, cells).expect("unit square mesh is conforming");
    for _ in 0..levels {
        complex = complex.refine_uniform().expect("red refinement conforms");
    }
    complex
}

/// Six-tetrahedron Kuhn mesh of the unit cube, refined `levels` times.
pub fn unit_cube_mesh(levels: usize) -> SimplicialComplex {
    let mut coords = Vec::with_capacity(8);
    for z in 0..2 {
        for y in 0..2 {
            for x in 0..2 {
                coords.push(vec![x as f64, y as f64, z as f64]);
            }
        }
    }
    let idx = |x: usize, y: usize, z: usize| x + 2 * y + 4 * z;
    let mut cells = Vec::new();
    // Paths from (0,0,0) to (1,1,1), one per permutation of the axes.
    let perms = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    for perm in perms {
        let mut pos = [0usize; 3];
        let mut cell = vec![idx(pos[0], pos[1], pos[2])];
        for &axis in &perm {
            pos[axis] = 1;
            cell.push(idx(pos[0], pos[1], pos[2]));
        }
        cells.push(cell);
    }
    let mut complex = build_complex(coords, cells).expect("Kuhn cube mesh is conforming");
    for _ in 0..levels {
        complex = complex.refine_uniform().expect("red refinement conforms");
    }
    complex
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Signed determinant of the edge matrix of a full-dimensional simplex.
fn edge_determinant(pts: &[&[f64]]) -> f64 {
    let n = pts.len() - 1;
    let m = DMatrix::from_fn(n, n, |i, j| pts[j + 1][i] - pts[0][i]);
    m.determinant()
}

/// Unsigned d-volume via the Gram determinant of the edge vectors.
pub fn simplex_volume(pts: &[Vec<f64>]) -> f64 {
    let d = pts.len() - 1;
    if d == 0 {
        return 1.0;
    }
    let amb = pts[0].len();
    let e = DMatrix::from_fn(amb, d, |i, j| pts[j + 1][i] - pts[0][i]);
    let gram = e.transpose() * &e;
    let det = gram.determinant().max(0.0);
    det.sqrt() / factorial(d)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Barycentric coordinates of a point with respect to a full-dimensional
/// cell, or `None` if the cell is degenerate.
fn barycentric_in_cell(pts: &[&[f64]], x: &[f64]) -> Option<Vec<f64>> {
    let n = x.len();
    let m = DMatrix::from_fn(n, n, |i, j| pts[j + 1][i] - pts[0][i]);
    let rhs = DVector::from_fn(n, |i, _| x[i] - pts[0][i]);
    let sol = m.lu().solve(&rhs)?;
    let mut bary = vec![1.0 - sol.iter().sum::<f64>()];
    bary.extend(sol.iter());
    Some(bary)
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    // Both lists are ascending.
    let mut it = b.iter();
    'outer: for x in a {
        for y in it.by_ref() {
            if y == x {
                continue 'outer;
            }
            if y > x {
                return false;
            }
        }
        return false;
    }
    true
}

/// All nonempty subsets of an ascending list, ascending order preserved.
fn subsets_nonempty(verts: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 1u32..(1 << verts.len()) {
        let sub: Vec<usize> = verts
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, &v)| v)
            .collect();
        out.push(sub);
    }
    out
}
