//! L^p norms and wedge-pairing integrals over cells, by exact formula for
//! polynomial integrands and Grundmann–Möller quadrature otherwise.

use std::sync::Arc;

use crate::error::Result;
use crate::mesh::{SimplexId, SimplicialComplex};

use super::chart::Chart;
use super::polyform::{
    cartesian_to_bary_frame, euclidean_norm, wedge_top_coefficient, PolyForm,
};
use super::quadrature::{grundmann_moeller, SimplexRule};
use super::sampled::SampledForm;

/// Lebesgue exponent for norms; quantitative acceptance runs at L².
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum LpExponent {
    One,
    Two,
    Infinity,
}

impl LpExponent {
    pub fn label(&self) -> &'static str {
        match self {
            LpExponent::One => "1",
            LpExponent::Two => "2",
            LpExponent::Infinity => "inf",
        }
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Accumulates |coeffs|^p over quadrature nodes into an L^p aggregate.
struct LpAccumulator {
    p: LpExponent,
    value: f64,
}

impl LpAccumulator {
    fn new(p: LpExponent) -> Self {
        LpAccumulator { p, value: 0.0 }
    }

    fn push(&mut self, pointwise: f64, phys_weight: f64) {
        match self.p {
            LpExponent::One => self.value += phys_weight * pointwise,
            LpExponent::Two => self.value += phys_weight * pointwise * pointwise,
            LpExponent::Infinity => self.value = self.value.max(pointwise),
        }
    }

    fn merge(&mut self, other: f64) {
        match self.p {
            LpExponent::Infinity => self.value = self.value.max(other),
            _ => self.value += other,
        }
    }

    fn finish(self) -> f64 {
        match self.p {
            LpExponent::One => self.value,
            LpExponent::Two => self.value.sqrt(),
            LpExponent::Infinity => self.value,
        }
    }
}

/// L^p norm of a polynomial form over its own host simplex.
pub fn lp_norm_poly(form: &PolyForm, p: LpExponent, order: usize) -> f64 {
    let chart = &form.chart;
    let rule = grundmann_moeller(chart.dim(), order);
    let mut acc = LpAccumulator::new(p);
    let scale = factorial(chart.dim()) * chart.volume;
    for (bary, w) in rule.bary.iter().zip(&rule.weights) {
        let coeffs = form.eval_cartesian(bary);
        acc.push(euclidean_norm(&coeffs), scale * w);
    }
    acc.finish()
}

/// L^p norm over a set of cells of the difference between a sampled form and
/// an optional per-cell polynomial representation (pass `None` to measure the
/// sampled form itself).
pub fn lp_norm_diff<'a>(
    complex: &SimplicialComplex,
    cells: &[SimplexId],
    sampled: &SampledForm,
    per_cell: impl Fn(SimplexId) -> Option<&'a PolyForm>,
    p: LpExponent,
    order: usize,
) -> f64 {
    let mut acc = LpAccumulator::new(p);
    for &t in cells {
        let chart = Chart::of_simplex(complex, t);
        let rule = grundmann_moeller(chart.dim(), order);
        let poly = per_cell(t);
        let cell_val = cell_lp_contribution(&chart, &rule, sampled, poly, p);
        acc.merge(cell_val);
    }
    acc.finish_outer()
}

impl LpAccumulator {
    /// Finishes an accumulator whose entries are already per-cell aggregates
    /// (p-th powers for finite p).
    fn finish_outer(self) -> f64 {
        match self.p {
            LpExponent::One => self.value,
            LpExponent::Two => self.value.sqrt(),
            LpExponent::Infinity => self.value,
        }
    }
}

fn cell_lp_contribution(
    chart: &Arc<Chart>,
    rule: &SimplexRule,
    sampled: &SampledForm,
    poly: Option<&PolyForm>,
    p: LpExponent,
) -> f64 {
    let scale = factorial(chart.dim()) * chart.volume;
    let mut local = 0.0f64;
    for (bary, w) in rule.bary.iter().zip(&rule.weights) {
        let x = chart.point(bary);
        let mut coeffs = sampled.eval(x.as_slice());
        if let Some(form) = poly {
            let fv = form.eval_cartesian(bary);
            for (c, f) in coeffs.iter_mut().zip(&fv) {
                *c -= f;
            }
        }
        let pointwise = euclidean_norm(&coeffs);
        match p {
            LpExponent::One => local += scale * w * pointwise,
            LpExponent::Two => local += scale * w * pointwise * pointwise,
            LpExponent::Infinity => local = local.max(pointwise),
        }
    }
    local
}

/// Exact ∫_S a ∧ b for polynomial forms with complementary degrees.
pub fn pair_poly(a: &PolyForm, b: &PolyForm) -> Result<f64> {
    a.wedge(b)?.integrate()
}

/// ∫_S a ∧ ω by quadrature, with `a` polynomial on the host chart and ω
/// sampled in Cartesian coordinates (restricted to the host's affine hull).
pub fn pair_poly_sampled(a: &PolyForm, omega: impl Fn(&[f64]) -> Vec<f64>, order: usize) -> f64 {
    let chart = &a.chart;
    let d = chart.dim();
    let k_b = d - a.degree;
    let rule = grundmann_moeller(d, order);
    let mut total = 0.0;
    for (bary, w) in rule.bary.iter().zip(&rule.weights) {
        let x = chart.point(bary);
        let a_frame = a.eval_bary(bary);
        let b_cart = omega(x.as_slice());
        let b_frame = cartesian_to_bary_frame(chart, k_b, &b_cart);
        total += w * wedge_top_coefficient(d, a.degree, &a_frame, &b_frame);
    }
    chart.orientation_sign as f64 * total
}

/// L²(S) inner product of two polynomial k-forms on the same chart, exact:
/// the pointwise inner product of the constant frames dλ_I is the Gram
/// determinant of the barycentric gradients.
pub fn l2_inner_poly(a: &PolyForm, b: &PolyForm) -> f64 {
    assert_eq!(a.degree, b.degree);
    let chart = &a.chart;
    let k = a.degree;
    let mut total = 0.0;
    for ta in a.terms() {
        for tb in b.terms() {
            // ⟨dλ_I, dλ_J⟩ = det(g_{I_a} · g_{J_b}).
            let m = nalgebra::DMatrix::from_fn(k, k, |r, c| {
                chart.grads[ta.wedge.0[r] as usize].dot(&chart.grads[tb.wedge.0[c] as usize])
            });
            let frame_inner = if k == 0 { 1.0 } else { m.determinant() };
            if frame_inner == 0.0 {
                continue;
            }
            let mono: Vec<u32> = ta
                .mono
                .0
                .iter()
                .zip(&tb.mono.0)
                .map(|(x, y)| x + y)
                .collect();
            let integral = factorial(chart.dim())
                * chart.volume
                * super::polyform::bary_monomial_integral(&mono);
            total += ta.coeff * tb.coeff * frame_inner * integral;
        }
    }
    total
}

/// L²(S) inner product of a sampled form against a polynomial form, by
/// quadrature with the pointwise Euclidean pairing of Cartesian frames.
pub fn l2_inner_sampled_poly(sampled: &SampledForm, form: &PolyForm, order: usize) -> f64 {
    l2_inner_fn_poly(|x| sampled.eval(x), form, order)
}

/// Same inner product with the sampled coefficients given as a closure.
pub fn l2_inner_fn_poly(
    coeffs: impl Fn(&[f64]) -> Vec<f64>,
    form: &PolyForm,
    order: usize,
) -> f64 {
    let chart = &form.chart;
    let rule = grundmann_moeller(chart.dim(), order);
    let scale = factorial(chart.dim()) * chart.volume;
    let mut total = 0.0;
    for (bary, w) in rule.bary.iter().zip(&rule.weights) {
        let x = chart.point(bary);
        let s = coeffs(x.as_slice());
        let f = form.eval_cartesian(bary);
        total += scale * w * s.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>();
    }
    total
}
