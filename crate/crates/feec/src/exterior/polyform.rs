//! Polynomial differential forms in barycentric representation.
//!
//! A form on a d-simplex is a sum of terms `c · λ^α · dλ_{i1} ∧ … ∧ dλ_{ik}`
//! with strictly increasing wedge indices drawn from {1, …, d}; dλ_0 is
//! eliminated through Σ_i dλ_i = 0 so that the representation of a fixed
//! homogeneous degree is unique.

use std::cmp::Ordering;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{FeecError, Result};
use super::chart::Chart;

/// Multi-index over the barycentric coordinates λ_0..λ_d of the host.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BaryMonomial(pub Vec<u32>);

impl BaryMonomial {
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn eval(&self, bary: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(bary)
            .map(|(&a, &l)| l.powi(a as i32))
            .product()
    }
}

/// Strictly increasing subset of {1, …, d} naming dλ_{i1} ∧ … ∧ dλ_{ik}.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WedgeIndex(pub Vec<u8>);

#[derive(Clone, Debug)]
pub struct Term {
    pub coeff: f64,
    pub mono: BaryMonomial,
    pub wedge: WedgeIndex,
}

/// Polynomial differential k-form on a simplex.
#[derive(Clone, Debug)]
pub struct PolyForm {
    pub chart: Arc<Chart>,
    pub degree: usize,
    terms: Vec<Term>,
}

/// All strictly increasing k-subsets of {lo, …, hi−1}, lexicographic.
pub fn subsets_k(lo: u8, hi: u8, k: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn rec(start: u8, hi: u8, k: usize, current: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..hi {
            current.push(i);
            rec(i + 1, hi, k, current, out);
            current.pop();
        }
    }
    rec(lo, hi, k, &mut current, &mut out);
    out
}

/// Sign of the shuffle merging two disjoint increasing index lists, or `None`
/// if they intersect.
fn merge_sign(a: &[u8], b: &[u8]) -> Option<(Vec<u8>, i32)> {
    let mut merged = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    let mut inversions = 0usize;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Equal => return None,
            Ordering::Less => {
                merged.push(a[i]);
                i += 1;
            }
            Ordering::Greater => {
                // b[j] jumps over the remaining entries of a.
                inversions += a.len() - i;
                merged.push(b[j]);
                j += 1;
            }
        }
    }
    merged.extend_from_slice(&a[i..]);
    merged.extend_from_slice(&b[j..]);
    let sign = if inversions % 2 == 0 { 1 } else { -1 };
    Some((merged, sign))
}

impl PolyForm {
    pub fn new(chart: Arc<Chart>, degree: usize, terms: Vec<Term>) -> PolyForm {
        let mut form = PolyForm {
            chart,
            degree,
            terms,
        };
        form.canonicalize();
        form
    }

    pub fn zero(chart: Arc<Chart>, degree: usize) -> PolyForm {
        PolyForm {
            chart,
            degree,
            terms: Vec::new(),
        }
    }

    /// The constant function 1 as a 0-form.
    pub fn one(chart: Arc<Chart>) -> PolyForm {
        let d = chart.dim();
        PolyForm {
            chart,
            degree: 0,
            terms: vec![Term {
                coeff: 1.0,
                mono: BaryMonomial(vec![0; d + 1]),
                wedge: WedgeIndex(Vec::new()),
            }],
        }
    }

    /// The barycentric coordinate λ_v as a 0-form.
    pub fn bary_coord(chart: Arc<Chart>, v: usize) -> PolyForm {
        let d = chart.dim();
        let mut exp = vec![0; d + 1];
        exp[v] = 1;
        PolyForm {
            chart,
            degree: 0,
            terms: vec![Term {
                coeff: 1.0,
                mono: BaryMonomial(exp),
                wedge: WedgeIndex(Vec::new()),
            }],
        }
    }

    /// The constant 1-form dλ_v, with dλ_0 rewritten as −Σ dλ_i.
    pub fn bary_differential(chart: Arc<Chart>, v: usize) -> PolyForm {
        let d = chart.dim();
        let mono = BaryMonomial(vec![0; d + 1]);
        let terms = if v == 0 {
            (1..=d)
                .map(|i| Term {
                    coeff: -1.0,
                    mono: mono.clone(),
                    wedge: WedgeIndex(vec![i as u8]),
                })
                .collect()
        } else {
            vec![Term {
                coeff: 1.0,
                mono,
                wedge: WedgeIndex(vec![v as u8]),
            }]
        };
        PolyForm::new(chart, 1, terms)
    }

    /// Whitney form ϕ_σ = Σ_i (−1)^i λ_{σ_i} dλ_{σ_0} ∧ …(omit i)… ∧ dλ_{σ_k}.
    pub fn whitney(chart: Arc<Chart>, sigma: &[usize]) -> PolyForm {
        let k = sigma.len() - 1;
        let mut acc = PolyForm::zero(chart.clone(), k);
        for (i, &v) in sigma.iter().enumerate() {
            let mut factor = PolyForm::bary_coord(chart.clone(), v);
            for (j, &w) in sigma.iter().enumerate() {
                if j != i {
                    factor = factor.wedge(&PolyForm::bary_differential(chart.clone(), w)).unwrap();
                }
            }
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            acc = acc.add(&factor.scale(sign));
        }
        acc
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Maximum monomial degree over the terms.
    pub fn poly_degree(&self) -> u32 {
        self.terms.iter().map(|t| t.mono.degree()).max().unwrap_or(0)
    }

    fn canonicalize(&mut self) {
        self.terms
            .sort_by(|a, b| (&a.wedge, &a.mono).cmp(&(&b.wedge, &b.mono)));
        let mut merged: Vec<Term> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            if let Some(last) = merged.last_mut() {
                if last.wedge == t.wedge && last.mono == t.mono {
                    last.coeff += t.coeff;
                    continue;
                }
            }
            merged.push(t);
        }
        merged.retain(|t| t.coeff != 0.0);
        self.terms = merged;
    }

    pub fn scale(&self, c: f64) -> PolyForm {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                coeff: c * t.coeff,
                mono: t.mono.clone(),
                wedge: t.wedge.clone(),
            })
            .collect();
        PolyForm::new(self.chart.clone(), self.degree, terms)
    }

    pub fn add(&self, other: &PolyForm) -> PolyForm {
        assert_eq!(self.degree, other.degree, "can only add forms of equal degree");
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        PolyForm::new(self.chart.clone(), self.degree, terms)
    }

    pub fn sub(&self, other: &PolyForm) -> PolyForm {
        self.add(&other.scale(-1.0))
    }

    /// Exterior (wedge) product.
    pub fn wedge(&self, other: &PolyForm) -> Result<PolyForm> {
        if !Arc::ptr_eq(&self.chart, &other.chart)
            && self.chart.points != other.chart.points
        {
            return Err(FeecError::HostMismatch);
        }
        let d = self.chart.dim();
        let k = self.degree + other.degree;
        if k > d {
            if self.terms.is_empty() || other.terms.is_empty() {
                return Ok(PolyForm::zero(self.chart.clone(), k));
            }
            return Err(FeecError::DegreeOverflow { degree: k, dim: d });
        }
        let mut terms = Vec::new();
        for a in &self.terms {
            for b in &other.terms {
                if let Some((merged, sign)) = merge_sign(&a.wedge.0, &b.wedge.0) {
                    let mono = BaryMonomial(
                        a.mono
                            .0
                            .iter()
                            .zip(&b.mono.0)
                            .map(|(x, y)| x + y)
                            .collect(),
                    );
                    terms.push(Term {
                        coeff: a.coeff * b.coeff * sign as f64,
                        mono,
                        wedge: WedgeIndex(merged),
                    });
                }
            }
        }
        Ok(PolyForm::new(self.chart.clone(), k, terms))
    }

    /// Exterior derivative: d(λ^α dλ_I) = Σ_v α_v λ^{α−e_v} dλ_v ∧ dλ_I.
    pub fn exterior_derivative(&self) -> PolyForm {
        let d = self.chart.dim();
        if self.degree >= d {
            return PolyForm::zero(self.chart.clone(), self.degree + 1);
        }
        let mut terms = Vec::new();
        for t in &self.terms {
            for v in 0..=d {
                let a = t.mono.0[v];
                if a == 0 {
                    continue;
                }
                let mut mono = t.mono.0.clone();
                mono[v] -= 1;
                // dλ_v ∧ dλ_I, with dλ_0 = −Σ_{i≥1} dλ_i.
                let factors: Vec<(f64, u8)> = if v == 0 {
                    (1..=d).map(|i| (-1.0, i as u8)).collect()
                } else {
                    vec![(1.0, v as u8)]
                };
                for (s, idx) in factors {
                    if let Some((merged, sign)) = merge_sign(&[idx], &t.wedge.0) {
                        terms.push(Term {
                            coeff: t.coeff * a as f64 * s * sign as f64,
                            mono: BaryMonomial(mono.clone()),
                            wedge: WedgeIndex(merged),
                        });
                    }
                }
            }
        }
        PolyForm::new(self.chart.clone(), self.degree + 1, terms)
    }

    /// Koszul operator: contraction with the position field x − base. The
    /// base point is given in barycentric coordinates of the host.
    pub fn koszul(&self, base_bary: &[f64]) -> PolyForm {
        assert!(self.degree >= 1, "koszul lowers the degree");
        let mut terms = Vec::new();
        for t in &self.terms {
            for (m, &i) in t.wedge.0.iter().enumerate() {
                let rest: Vec<u8> = t
                    .wedge
                    .0
                    .iter()
                    .copied()
                    .filter(|&j| j != i)
                    .collect();
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                // dλ_i(x − base) = λ_i(x) − λ_i(base).
                let mut mono_plus = t.mono.0.clone();
                mono_plus[i as usize] += 1;
                terms.push(Term {
                    coeff: t.coeff * sign,
                    mono: BaryMonomial(mono_plus),
                    wedge: WedgeIndex(rest.clone()),
                });
                terms.push(Term {
                    coeff: -t.coeff * sign * base_bary[i as usize],
                    mono: t.mono.clone(),
                    wedge: WedgeIndex(rest),
                });
            }
        }
        PolyForm::new(self.chart.clone(), self.degree - 1, terms)
    }

    /// Koszul operator about the barycenter of the host.
    pub fn koszul_barycenter(&self) -> PolyForm {
        let d = self.chart.dim();
        let base = vec![1.0 / (d as f64 + 1.0); d + 1];
        self.koszul(&base)
    }

    /// Trace (pullback) onto the subsimplex whose chart and host-local vertex
    /// positions are given: `keep[j]` is the host-local index of face vertex j.
    pub fn trace(&self, face: &Arc<Chart>, keep: &[usize]) -> Result<PolyForm> {
        let d = self.chart.dim();
        let df = face.dim();
        if keep.len() != df + 1 || keep.windows(2).any(|w| w[0] >= w[1]) || keep[df] > d {
            return Err(FeecError::NotASubsimplex);
        }
        if self.degree > df {
            // Top-degree drop: a k-form pulls back to zero on a lower-dim face.
            return Ok(PolyForm::zero(face.clone(), self.degree));
        }
        let pos_of: Vec<Option<usize>> = (0..=d)
            .map(|v| keep.iter().position(|&kv| kv == v))
            .collect();
        let mut acc = PolyForm::zero(face.clone(), self.degree);
        'term: for t in &self.terms {
            // Monomial factors λ_v vanish on the face for v ∉ keep.
            let mut mono = vec![0u32; df + 1];
            for v in 0..=d {
                if t.mono.0[v] > 0 {
                    match pos_of[v] {
                        Some(j) => mono[j] = t.mono.0[v],
                        None => continue 'term,
                    }
                }
            }
            let mut factor = PolyForm {
                chart: face.clone(),
                degree: 0,
                terms: vec![Term {
                    coeff: t.coeff,
                    mono: BaryMonomial(mono),
                    wedge: WedgeIndex(Vec::new()),
                }],
            };
            for &i in &t.wedge.0 {
                match pos_of[i as usize] {
                    None => continue 'term,
                    Some(j) => {
                        factor = factor.wedge(&PolyForm::bary_differential(face.clone(), j))?;
                    }
                }
            }
            acc = acc.add(&factor);
        }
        Ok(acc)
    }

    /// Exact integral of a top-degree form over its host with the host's
    /// fixed orientation: ∫_S λ^α dλ_1∧…∧dλ_d = s_S · α! / (|α|+d)!.
    pub fn integrate(&self) -> Result<f64> {
        let d = self.chart.dim();
        if self.degree != d {
            return Err(FeecError::DegreeMismatch {
                degree: self.degree,
                dim: d,
            });
        }
        let mut value = 0.0;
        for t in &self.terms {
            // Only dλ_{1..d} has size d; canonical form guarantees it.
            value += t.coeff * bary_monomial_integral(&t.mono.0);
        }
        Ok(self.chart.orientation_sign as f64 * value)
    }

    /// Evaluates the form at barycentric coordinates `bary`; returns the
    /// coefficients with respect to the dλ_I frame, I running over the
    /// increasing k-subsets of {1..d} in lexicographic order.
    pub fn eval_bary(&self, bary: &[f64]) -> Vec<f64> {
        let d = self.chart.dim();
        let wedges = subsets_k(1, d as u8 + 1, self.degree);
        let mut out = vec![0.0; wedges.len()];
        for t in &self.terms {
            let slot = wedges
                .binary_search(&t.wedge.0)
                .expect("canonical wedge index");
            out[slot] += t.coeff * t.mono.eval(bary);
        }
        out
    }

    /// Evaluates the form at a point given in barycentric coordinates and
    /// returns Cartesian-frame coefficients over the increasing k-subsets of
    /// the ambient axes {0..N−1}.
    pub fn eval_cartesian(&self, bary: &[f64]) -> Vec<f64> {
        let n = self.chart.ambient_dim();
        let k = self.degree;
        let axes = subsets_k(0, n as u8, k);
        let mut out = vec![0.0; axes.len()];
        for t in &self.terms {
            let scalar = t.coeff * t.mono.eval(bary);
            if scalar == 0.0 {
                continue;
            }
            for (slot, axis) in axes.iter().enumerate() {
                // det of the k×k matrix (g_{I_a})_{J_b}.
                let m = DMatrix::from_fn(k, k, |a, b| {
                    self.chart.grads[t.wedge.0[a] as usize][axis[b] as usize]
                });
                let det = if k == 0 { 1.0 } else { m.determinant() };
                out[slot] += scalar * det;
            }
        }
        out
    }

    /// Partial derivative of the coefficient functions along the Cartesian
    /// axis `dir`; the wedge part is untouched.
    pub fn partial(&self, dir: usize) -> PolyForm {
        let d = self.chart.dim();
        let mut terms = Vec::new();
        for t in &self.terms {
            for v in 0..=d {
                let a = t.mono.0[v];
                if a == 0 {
                    continue;
                }
                let g = self.chart.grads[v][dir];
                if g == 0.0 {
                    continue;
                }
                let mut mono = t.mono.0.clone();
                mono[v] -= 1;
                terms.push(Term {
                    coeff: t.coeff * a as f64 * g,
                    mono: BaryMonomial(mono),
                    wedge: t.wedge.clone(),
                });
            }
        }
        PolyForm::new(self.chart.clone(), self.degree, terms)
    }

    /// Rewrites the form with all monomials of degree exactly `r` using
    /// Σ λ_i = 1, making the coefficient representation unique.
    pub fn homogenize(&self, r: u32) -> PolyForm {
        let d = self.chart.dim();
        let mut terms = Vec::new();
        for t in &self.terms {
            let deficit = r
                .checked_sub(t.mono.degree())
                .expect("homogenization degree at least the polynomial degree");
            // Multiply by (Σ λ)^deficit.
            let mut partial: Vec<(Vec<u32>, f64)> = vec![(t.mono.0.clone(), t.coeff)];
            for _ in 0..deficit {
                let mut next = Vec::with_capacity(partial.len() * (d + 1));
                for (mono, c) in &partial {
                    for v in 0..=d {
                        let mut m = mono.clone();
                        m[v] += 1;
                        next.push((m, *c));
                    }
                }
                partial = next;
            }
            for (mono, c) in partial {
                terms.push(Term {
                    coeff: c,
                    mono: BaryMonomial(mono),
                    wedge: t.wedge.clone(),
                });
            }
        }
        PolyForm::new(self.chart.clone(), self.degree, terms)
    }

    /// Euclidean norm of the canonical (homogenized) coefficient vector of
    /// `self − other`; both forms must share a host.
    pub fn coeff_distance(&self, other: &PolyForm) -> f64 {
        let r = self.poly_degree().max(other.poly_degree());
        self.homogenize(r).sub(&other.homogenize(r)).coeff_norm()
    }

    /// Euclidean norm of the homogenized coefficient vector.
    pub fn coeff_norm(&self) -> f64 {
        let h = self.homogenize(self.poly_degree());
        h.terms.iter().map(|t| t.coeff * t.coeff).sum::<f64>().sqrt()
    }

    /// Re-expresses the form on another chart whose affine hull is contained
    /// in the host's hull (e.g. a child cell of a refinement): barycentric
    /// coordinates of the host become affine functions of the target's.
    pub fn reexpress_on(&self, target: &Arc<Chart>) -> PolyForm {
        let dt = target.dim();
        // λ^host_v and dλ^host_v as forms on the target chart.
        let d = self.chart.dim();
        let mut coord_forms = Vec::with_capacity(d + 1);
        let mut diff_forms = Vec::with_capacity(d + 1);
        for v in 0..=d {
            let vals: Vec<f64> = target
                .points
                .iter()
                .map(|p| self.chart.barycentric(p.as_slice())[v])
                .collect();
            let mut c = PolyForm::zero(target.clone(), 0);
            for (j, val) in vals.iter().enumerate() {
                if *val != 0.0 {
                    c = c.add(&PolyForm::bary_coord(target.clone(), j).scale(*val));
                }
            }
            coord_forms.push(c);
            let mut df = PolyForm::zero(target.clone(), 1);
            for j in 1..=dt {
                let coeff = vals[j] - vals[0];
                if coeff != 0.0 {
                    df = df.add(&PolyForm::bary_differential(target.clone(), j).scale(coeff));
                }
            }
            diff_forms.push(df);
        }
        let mut acc = PolyForm::zero(target.clone(), self.degree);
        for t in &self.terms {
            let mut factor = PolyForm::one(target.clone()).scale(t.coeff);
            for v in 0..=d {
                for _ in 0..t.mono.0[v] {
                    factor = factor.wedge(&coord_forms[v]).unwrap();
                }
            }
            for &i in &t.wedge.0 {
                factor = match factor.wedge(&diff_forms[i as usize]) {
                    Ok(f) => f,
                    Err(_) => PolyForm::zero(target.clone(), self.degree),
                };
            }
            if factor.degree == self.degree {
                acc = acc.add(&factor);
            }
        }
        acc
    }

    /// Builds the form from Cartesian data: a sum over (axis subset J,
    /// Cartesian monomial γ, coefficient) of `c · x^γ dx_J`.
    pub fn from_cartesian(
        chart: Arc<Chart>,
        degree: usize,
        terms: &[(Vec<u8>, Vec<u32>, f64)],
    ) -> PolyForm {
        let n = chart.ambient_dim();
        let mut acc = PolyForm::zero(chart.clone(), degree);
        for (axes, gamma, c) in terms {
            // Scalar part x^γ with x_i = Σ_v λ_v p_v[i].
            let mut scalar = PolyForm::one(chart.clone()).scale(*c);
            for i in 0..n {
                for _ in 0..gamma[i] {
                    let xi = coordinate_form(&chart, i);
                    scalar = scalar.wedge(&xi).unwrap();
                }
            }
            let mut form = scalar;
            for &i in axes {
                form = form
                    .wedge(&coordinate_differential(&chart, i as usize))
                    .unwrap();
            }
            acc = acc.add(&form);
        }
        acc
    }
}

/// A random polynomial k-form: a few random monomial terms per wedge slot,
/// with coefficients in [−1, 1] and monomial degrees up to `poly_degree`.
pub fn random_polyform(
    chart: &Arc<Chart>,
    degree: usize,
    poly_degree: u32,
    rng: &mut impl rand::Rng,
) -> PolyForm {
    let d = chart.dim();
    let mut terms = Vec::new();
    for wedge in subsets_k(1, d as u8 + 1, degree) {
        for _ in 0..3 {
            let mut mono = vec![0u32; d + 1];
            for _ in 0..rng.gen_range(0..=poly_degree) {
                mono[rng.gen_range(0..=d)] += 1;
            }
            terms.push(Term {
                coeff: rng.gen_range(-1.0..1.0),
                mono: BaryMonomial(mono),
                wedge: WedgeIndex(wedge.clone()),
            });
        }
    }
    PolyForm::new(chart.clone(), degree, terms)
}

/// The Cartesian coordinate x_i as a 0-form on the chart.
pub fn coordinate_form(chart: &Arc<Chart>, i: usize) -> PolyForm {
    let d = chart.dim();
    let mut acc = PolyForm::zero(chart.clone(), 0);
    for v in 0..=d {
        acc = acc.add(&PolyForm::bary_coord(chart.clone(), v).scale(chart.points[v][i]));
    }
    acc
}

/// The differential dx_i pulled back to the chart: Σ_{j≥1} (p_j − p_0)_i dλ_j.
pub fn coordinate_differential(chart: &Arc<Chart>, i: usize) -> PolyForm {
    let d = chart.dim();
    let mut acc = PolyForm::zero(chart.clone(), 1);
    for j in 1..=d {
        let c = chart.points[j][i] - chart.points[0][i];
        if c != 0.0 {
            acc = acc.add(&PolyForm::bary_differential(chart.clone(), j).scale(c));
        }
    }
    acc
}

/// ∫_{Δ_d} λ^α dλ_{1..d} over the ascending-orientation reference simplex:
/// α! / (|α| + d)! with α! = Π α_i!.
pub fn bary_monomial_integral(alpha: &[u32]) -> f64 {
    let d = alpha.len() - 1;
    let total: u32 = alpha.iter().sum();
    let mut value = 1.0;
    for &a in alpha {
        for j in 1..=a {
            value *= j as f64;
        }
    }
    for j in 1..=(total + d as u32) {
        value /= j as f64;
    }
    value
}

/// Volume form of a chart: the d-form with ∫ = vol(S).
pub fn volume_form(chart: &Arc<Chart>) -> PolyForm {
    let d = chart.dim();
    let wedge: Vec<u8> = (1..=d as u8).collect();
    let scale = mesh_factorial(d) * chart.volume * chart.orientation_sign as f64;
    PolyForm::new(
        chart.clone(),
        d,
        vec![Term {
            coeff: scale,
            mono: BaryMonomial(vec![0; d + 1]),
            wedge: WedgeIndex(wedge),
        }],
    )
}

fn mesh_factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Frame vector b_I = ω(t_{i1}, …, t_{ik}) of an alternating tensor given by
/// Cartesian coefficients, with t_i the edge vectors of the chart. This is
/// the dλ-frame coefficient vector of the pullback onto the chart.
pub fn cartesian_to_bary_frame(chart: &Chart, degree: usize, cart: &[f64]) -> Vec<f64> {
    let d = chart.dim();
    let n = chart.ambient_dim();
    let edges = chart.edge_vectors();
    let axes = subsets_k(0, n as u8, degree);
    let wedges = subsets_k(1, d as u8 + 1, degree);
    let mut out = vec![0.0; wedges.len()];
    for (slot, wi) in wedges.iter().enumerate() {
        let mut v = 0.0;
        for (aslot, axis) in axes.iter().enumerate() {
            if cart[aslot] == 0.0 {
                continue;
            }
            let m = DMatrix::from_fn(degree, degree, |a, b| {
                edges[wi[a] as usize - 1][axis[b] as usize]
            });
            let det = if degree == 0 { 1.0 } else { m.determinant() };
            v += cart[aslot] * det;
        }
        out[slot] = v;
    }
    out
}

/// Top coefficient of a wedge a ∧ b in a common frame of d one-forms, where
/// `a` has degree k, `b` degree d−k, both indexed by increasing subsets.
pub fn wedge_top_coefficient(d: usize, k: usize, a: &[f64], b: &[f64]) -> f64 {
    let a_sets = subsets_k(1, d as u8 + 1, k);
    let b_sets = subsets_k(1, d as u8 + 1, d - k);
    let mut total = 0.0;
    for (i, sa) in a_sets.iter().enumerate() {
        if a[i] == 0.0 {
            continue;
        }
        let complement: Vec<u8> = (1..=d as u8).filter(|x| !sa.contains(x)).collect();
        let j = b_sets.binary_search(&complement).unwrap();
        if let Some((_, sign)) = merge_sign(sa, &complement) {
            total += a[i] * b[j] * sign as f64;
        }
    }
    total
}

/// Euclidean pointwise norm of Cartesian-frame coefficients.
pub fn euclidean_norm(coeffs: &[f64]) -> f64 {
    coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
}
