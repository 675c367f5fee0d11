//! The quasi-interpolation operators: patch smoothers, cell projections, the
//! Clément interpolant with and without partial boundary conditions, and the
//! Scott-Zhang interpolant.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::biorth::BiorthogonalSystem;
use crate::error::{FeecError, Result};
use crate::exterior::chart::Chart;
use crate::exterior::norms::{l2_inner_fn_poly, l2_inner_poly, lp_norm_diff, lp_norm_poly};
use crate::exterior::polyform::{subsets_k, PolyForm};
use crate::exterior::quadrature::{ball_rule, BallRule};
use crate::exterior::sampled::SampledForm;
use crate::exterior::LpExponent;
use crate::facetdual::KFunctionals;
use crate::linalg::{min_norm_solve, nullspace};
use crate::mesh::{BoundarySubcomplex, SimplexId, SimplicialComplex};
use crate::spaces::{GlobalFESpace, RANK_TOL};

/// Options shared by the interpolation operators.
#[derive(Clone, Debug)]
pub struct InterpOptions {
    /// Quadrature order for moment and error integrals.
    pub order: usize,
}

impl InterpOptions {
    pub fn for_degree(r: u32) -> InterpOptions {
        InterpOptions {
            order: 2 * r as usize + 4,
        }
    }
}

/// Componentwise averaged Taylor smoother of degree r over a ball inside the
/// largest cell of the containment patch of a simplex.
pub struct LocalSmoother {
    pub simplex: SimplexId,
    pub degree: u32,
    pub center: Vec<f64>,
    pub radius: f64,
    rule: BallRule,
    /// Bump values at the nodes, normalized against the rule itself.
    bump: Vec<f64>,
}

const BUMP_EXPONENT: i32 = 4;

impl LocalSmoother {
    pub fn build(complex: &SimplicialComplex, s: SimplexId, degree: u32) -> LocalSmoother {
        let cells = complex.containing_cells(s);
        let largest = *cells
            .iter()
            .max_by(|a, b| {
                complex
                    .volume(**a)
                    .partial_cmp(&complex.volume(**b))
                    .unwrap()
            })
            .expect("patch is nonempty");
        let chart = Chart::of_simplex(complex, largest);
        let (center, radius) = chart.inscribed_ball();
        let center: Vec<f64> = center.iter().copied().collect();
        let radius = 0.9 * radius;
        let rule = ball_rule(&center, radius, 2 * BUMP_EXPONENT as usize + 2 * degree as usize + 2);
        let mut bump: Vec<f64> = rule
            .nodes
            .iter()
            .map(|y| {
                let d2: f64 = y
                    .iter()
                    .zip(&center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (1.0 - d2 / (radius * radius)).max(0.0).powi(BUMP_EXPONENT)
            })
            .collect();
        let z: f64 = bump
            .iter()
            .zip(&rule.weights)
            .map(|(b, w)| b * w)
            .sum();
        bump.iter_mut().for_each(|b| *b /= z);
        LocalSmoother {
            simplex: s,
            degree,
            center,
            radius,
            rule,
            bump,
        }
    }

    /// The averaged Taylor polynomial P_Sω as a global Cartesian polynomial
    /// k-form: ∫_B Φ(y) T^r_y ω(x) dy, which reproduces polynomials of
    /// degree ≤ r exactly because the bump weights are self-normalized.
    pub fn apply(&self, omega: &SampledForm) -> Result<CartesianPoly> {
        let n = omega.ambient;
        let axes = subsets_k(0, n as u8, omega.degree);
        let betas = multi_indices_up_to(n, self.degree);
        let mut coeffs: HashMap<(usize, Vec<u32>), f64> = HashMap::new();
        for (q, y) in self.rule.nodes.iter().enumerate() {
            let w = self.rule.weights[q] * self.bump[q];
            if w == 0.0 {
                continue;
            }
            for beta in &betas {
                let dvals = omega.eval_deriv(y, beta)?;
                let inv_beta_fact = 1.0 / multi_factorial(beta);
                // (x − y)^β = Σ_{γ ≤ β} C(β,γ) x^γ (−y)^{β−γ}.
                for gamma in sub_multi_indices(beta) {
                    let mut c = inv_beta_fact * multi_binomial(beta, &gamma);
                    for i in 0..n {
                        let p = beta[i] - gamma[i];
                        if p > 0 {
                            c *= (-y[i]).powi(p as i32);
                        }
                    }
                    if c == 0.0 {
                        continue;
                    }
                    for (slot, _) in axes.iter().enumerate() {
                        let v = w * c * dvals[slot];
                        if v != 0.0 {
                            *coeffs.entry((slot, gamma.clone())).or_insert(0.0) += v;
                        }
                    }
                }
            }
        }
        let mut terms: Vec<(Vec<u8>, Vec<u32>, f64)> = coeffs
            .into_iter()
            .map(|((slot, gamma), c)| (axes[slot].clone(), gamma, c))
            .collect();
        terms.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
        Ok(CartesianPoly {
            ambient: n,
            degree: omega.degree,
            terms,
        })
    }
}

/// A polynomial differential form over the ambient space in Cartesian
/// monomial coordinates.
#[derive(Clone, Debug)]
pub struct CartesianPoly {
    pub ambient: usize,
    pub degree: usize,
    /// (axis subset, monomial, coefficient) of c · x^γ dx_J.
    pub terms: Vec<(Vec<u8>, Vec<u32>, f64)>,
}

impl CartesianPoly {
    pub fn to_polyform(&self, chart: &Arc<Chart>) -> PolyForm {
        PolyForm::from_cartesian(chart.clone(), self.degree, &self.terms)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let axes = subsets_k(0, self.ambient as u8, self.degree);
        let mut out = vec![0.0; axes.len()];
        for (a, gamma, c) in &self.terms {
            let slot = axes.binary_search(a).unwrap();
            let mono: f64 = x
                .iter()
                .zip(gamma)
                .map(|(xi, &g)| xi.powi(g as i32))
                .product();
            out[slot] += c * mono;
        }
        out
    }
}

fn multi_indices_up_to(n: usize, r: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = vec![0u32; n];
    fn rec(pos: usize, left: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos == current.len() {
            out.push(current.clone());
            return;
        }
        for v in 0..=left {
            current[pos] = v;
            rec(pos + 1, left - v, current, out);
        }
        current[pos] = 0;
    }
    rec(0, r, &mut current, &mut out);
    out
}

fn sub_multi_indices(beta: &[u32]) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for &b in beta {
        let mut next = Vec::with_capacity(out.len() * (b as usize + 1));
        for prefix in &out {
            for v in 0..=b {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

fn multi_factorial(beta: &[u32]) -> f64 {
    beta.iter()
        .map(|&b| (1..=b).map(|i| i as f64).product::<f64>())
        .product()
}

fn multi_binomial(beta: &[u32], gamma: &[u32]) -> f64 {
    beta.iter()
        .zip(gamma)
        .map(|(&b, &g)| {
            let mut v = 1.0;
            for i in 0..g {
                v = v * (b - i) as f64 / (i + 1) as f64;
            }
            v
        })
        .product()
}

/// Two-stage cell projection: d-part by L² projection onto dPΛ^k(T), then
/// the ker-d complement, achieving exact d-best approximation at p = 2.
pub struct CellProjector {
    pub cell: SimplexId,
    pub chart: Arc<Chart>,
    forms: Vec<PolyForm>,
    d_forms: Vec<PolyForm>,
    gram_d: DMatrix<f64>,
    ker_forms: Vec<PolyForm>,
    gram_ker: DMatrix<f64>,
}

impl CellProjector {
    pub fn build(space: &GlobalFESpace, cell: SimplexId) -> CellProjector {
        let cell_pos = space.cell_position(cell);
        let chart = space.cell_charts[cell_pos].clone();
        let local = &space.tables.local[space.complex.n];
        let forms: Vec<PolyForm> = (0..local.dim())
            .map(|j| {
                local
                    .canon
                    .from_vec(&chart, &local.vectors.column(j).into_owned())
            })
            .collect();
        let d_forms: Vec<PolyForm> = forms.iter().map(|f| f.exterior_derivative()).collect();
        let dim = forms.len();
        let gram_d = DMatrix::from_fn(dim, dim, |i, j| l2_inner_poly(&d_forms[i], &d_forms[j]));
        // Kernel of d within the local space, via the coefficient-level d
        // matrix of the basis.
        let (_, dmat) = local.canon.d_matrix();
        let ker = nullspace(&(dmat * &local.vectors), RANK_TOL);
        let ker_forms: Vec<PolyForm> = (0..ker.ncols())
            .map(|j| {
                let v = &local.vectors * ker.column(j).into_owned();
                local.canon.from_vec(&chart, &v)
            })
            .collect();
        let kd = ker_forms.len();
        let gram_ker =
            DMatrix::from_fn(kd, kd, |i, j| l2_inner_poly(&ker_forms[i], &ker_forms[j]));
        CellProjector {
            cell,
            chart,
            forms,
            d_forms,
            gram_d,
            ker_forms,
            gram_ker,
        }
    }

    fn project_from_inner(
        &self,
        rhs_d: DVector<f64>,
        omega_inner: impl Fn(&PolyForm) -> f64,
    ) -> PolyForm {
        // Stage 1–2: any σ with dσ = projection of dω.
        let (c0, _) = min_norm_solve(&self.gram_d, &rhs_d, RANK_TOL);
        let mut sigma = PolyForm::zero(self.chart.clone(), self.forms[0].degree);
        for (j, f) in self.forms.iter().enumerate() {
            if c0[j] != 0.0 {
                sigma = sigma.add(&f.scale(c0[j]));
            }
        }
        // Stage 3: L² projection of (ω − σ) onto ker d ∩ PΛ^k(T).
        if !self.ker_forms.is_empty() {
            let rhs = DVector::from_fn(self.ker_forms.len(), |i, _| {
                omega_inner(&self.ker_forms[i]) - l2_inner_poly(&sigma, &self.ker_forms[i])
            });
            let (a, _) = min_norm_solve(&self.gram_ker, &rhs, RANK_TOL);
            for (j, f) in self.ker_forms.iter().enumerate() {
                if a[j] != 0.0 {
                    sigma = sigma.add(&f.scale(a[j]));
                }
            }
        }
        sigma
    }

    /// Projects a sampled form with analytic dω.
    pub fn project_sampled(&self, omega: &SampledForm, order: usize) -> Result<PolyForm> {
        let d_coeffs = omega
            .d_coeffs
            .clone()
            .ok_or(FeecError::MissingExteriorDerivative)?;
        let rhs_d = DVector::from_fn(self.d_forms.len(), |i, _| {
            l2_inner_fn_poly(|x| d_coeffs(x), &self.d_forms[i], order)
        });
        Ok(self.project_from_inner(rhs_d, |f| l2_inner_fn_poly(|x| omega.eval(x), f, order)))
    }

    /// Projects a polynomial form living on the same cell (exact).
    pub fn project_poly(&self, omega: &PolyForm) -> PolyForm {
        let d_omega = omega.exterior_derivative();
        let rhs_d = DVector::from_fn(self.d_forms.len(), |i, _| {
            l2_inner_poly(&d_omega, &self.d_forms[i])
        });
        self.project_from_inner(rhs_d, |f| l2_inner_poly(omega, f))
    }

    /// ‖dω − dΠω‖_{L²(T)} for a polynomial input, for the d-best check.
    pub fn d_error_poly(&self, omega: &PolyForm) -> f64 {
        let pi = self.project_poly(omega);
        let diff = omega.exterior_derivative().sub(&pi.exterior_derivative());
        l2_inner_poly(&diff, &diff).max(0.0).sqrt()
    }
}

/// An interpolant value: coefficients over the geometric-decomposition basis
/// of the no-BC space, plus the indices zeroed by boundary conditions.
#[derive(Clone, Debug)]
pub struct InterpolantResult {
    pub coeffs: DVector<f64>,
    pub zeroed: Vec<usize>,
}

impl InterpolantResult {
    /// Restriction to a cell.
    pub fn on_cell(&self, space: &GlobalFESpace, cell: SimplexId) -> PolyForm {
        space.cell_form(space.cell_position(cell), &self.coeffs)
    }

    /// As a sampled form backed by the per-cell polynomials (piecewise
    /// polynomial, single-valued traces).
    pub fn as_sampled(&self, space: &GlobalFESpace) -> SampledForm {
        fe_sampled_form(space, &self.coeffs)
    }
}

/// Wraps a finite element coefficient vector as a SampledForm with exact
/// derivatives, locating the containing cell per evaluation point.
pub fn fe_sampled_form(space: &GlobalFESpace, coeffs: &DVector<f64>) -> SampledForm {
    let complex = space.complex.clone();
    let forms: Arc<Vec<PolyForm>> = Arc::new(
        (0..complex.cells().len())
            .map(|pos| space.cell_form(pos, coeffs))
            .collect(),
    );
    let d_forms: Arc<Vec<PolyForm>> =
        Arc::new(forms.iter().map(|f| f.exterior_derivative()).collect());
    let locator = Arc::new(crate::mesh::PointLocator::build(&complex));
    let n = complex.n;
    let k = space.k;

    let f1 = forms.clone();
    let loc1 = locator.clone();
    let c1 = complex.clone();
    let coeffs_fn: crate::exterior::CoeffFn = Arc::new(move |x: &[f64]| {
        let pos = loc1.locate(&c1, x).expect("point inside the mesh");
        let chart = &f1[pos].chart;
        f1[pos].eval_cartesian(&chart.barycentric(x))
    });
    let f2 = d_forms.clone();
    let loc2 = locator.clone();
    let c2 = complex.clone();
    let d_fn: crate::exterior::CoeffFn = Arc::new(move |x: &[f64]| {
        let pos = loc2.locate(&c2, x).expect("point inside the mesh");
        let chart = &f2[pos].chart;
        f2[pos].eval_cartesian(&chart.barycentric(x))
    });
    let f3 = forms.clone();
    let loc3 = locator;
    let c3 = complex.clone();
    let deriv_fn: crate::exterior::DerivFn = Arc::new(move |x: &[f64], beta: &[u32]| {
        let pos = loc3.locate(&c3, x).expect("point inside the mesh");
        let mut form = f3[pos].clone();
        for (dir, &b) in beta.iter().enumerate() {
            for _ in 0..b {
                form = form.partial(dir);
            }
        }
        let chart = &form.chart;
        form.eval_cartesian(&chart.barycentric(x))
    });
    SampledForm::new(n, k, coeffs_fn)
        .with_d(d_fn)
        .with_derivs(deriv_fn)
}

/// The Clément interpolant: 𝓘ω = Σ_{S,i} φ*_{S,i}(P_S ω) φ_{S,i}.
pub fn clement(
    system: &BiorthogonalSystem,
    omega: &SampledForm,
    opts: &InterpOptions,
) -> Result<InterpolantResult> {
    clement_bc(system, omega, &BoundarySubcomplex::empty(), opts)
}

/// The modified Clément interpolant: the sum skips boundary-part simplices,
/// so the output lies in the space with homogeneous boundary conditions.
pub fn clement_bc(
    system: &BiorthogonalSystem,
    omega: &SampledForm,
    bc: &BoundarySubcomplex,
    _opts: &InterpOptions,
) -> Result<InterpolantResult> {
    let complex = system.complex();
    let space = &system.space;
    let r = space.r;
    // Per-simplex smoothed dof values, computed in parallel and accumulated
    // in a fixed order for determinism.
    let groups: Vec<(SimplexId, Vec<usize>)> = group_dofs_by_simplex(space);
    let values: Vec<Result<Vec<(usize, f64)>>> = groups
        .par_iter()
        .map(|(s, gs)| {
            if bc.contains(*s) {
                return Ok(Vec::new());
            }
            let smoother = LocalSmoother::build(complex, *s, r);
            let smoothed = smoother.apply(omega)?;
            let chart = Chart::of_simplex(complex, *s);
            let local = smoothed.to_polyform(&chart);
            let mut out = Vec::with_capacity(gs.len());
            for &g in gs {
                let (_, i) = space.dofs[g];
                let dof = system.dofs.dof(*s, i);
                out.push((g, dof.apply_local(&local)?));
            }
            Ok(out)
        })
        .collect();
    let mut combo: Vec<(usize, f64)> = Vec::with_capacity(space.dim());
    let mut zeroed = Vec::new();
    for (value, (s, gs)) in values.into_iter().zip(&groups) {
        let value = value?;
        if value.is_empty() && bc.contains(*s) {
            zeroed.extend(gs.iter().copied());
            continue;
        }
        combo.extend(value);
    }
    combo.sort_by_key(|(g, _)| *g);
    let coeffs = system.expand(&combo);
    Ok(InterpolantResult { coeffs, zeroed })
}

/// The Scott-Zhang interpolant 𝓙ω = Σ K_{S,i}(ω) φ_{S,i}. When `bc` is
/// given, the coefficients of boundary-part dofs are forced to exactly zero
/// (they vanish analytically for boundary-condition data).
pub fn scott_zhang(
    system: &BiorthogonalSystem,
    kf: &KFunctionals,
    omega: &SampledForm,
    bc: Option<&BoundarySubcomplex>,
    opts: &InterpOptions,
) -> Result<InterpolantResult> {
    let space = &system.space;
    let values: Vec<Result<(usize, f64)>> = (0..space.dim())
        .into_par_iter()
        .map(|g| {
            let (s, _) = space.dofs[g];
            if let Some(bc) = bc {
                if bc.contains(s) {
                    return Ok((g, 0.0));
                }
            }
            let v = kf.apply_sampled(space, &system.dofs, g, omega, opts.order)?;
            Ok((g, v))
        })
        .collect();
    let mut combo = Vec::with_capacity(space.dim());
    let mut zeroed = Vec::new();
    for v in values {
        let (g, value) = v?;
        let (s, _) = space.dofs[g];
        if bc.map(|b| b.contains(s)).unwrap_or(false) {
            zeroed.push(g);
            continue;
        }
        combo.push((g, value));
    }
    let coeffs = system.expand(&combo);
    Ok(InterpolantResult { coeffs, zeroed })
}

fn group_dofs_by_simplex(space: &GlobalFESpace) -> Vec<(SimplexId, Vec<usize>)> {
    let mut groups: Vec<(SimplexId, Vec<usize>)> = Vec::new();
    for (g, &(s, _)) in space.dofs.iter().enumerate() {
        match groups.last_mut() {
            Some((last, list)) if *last == s => list.push(g),
            _ => groups.push((s, vec![g])),
        }
    }
    groups
}

/// Measured local stability constant: max over cells of
/// ‖Iω‖_{L^p(T)} / ‖ω‖_{L^p(U*_T)}.
pub fn stability_constant(
    system: &BiorthogonalSystem,
    result: &InterpolantResult,
    omega: &SampledForm,
    p: LpExponent,
    order: usize,
) -> f64 {
    let complex = system.complex();
    let space = &system.space;
    let mut worst = 0.0f64;
    for &t in complex.cells() {
        let form = result.on_cell(space, t);
        let num = lp_norm_poly(&form, p, order);
        let patch = complex.patches(t).expect("cell exists");
        let den = lp_norm_diff(complex, &patch.star_cells, omega, |_| None, p, order);
        if den > 1e-14 {
            worst = worst.max(num / den);
        }
    }
    worst
}
