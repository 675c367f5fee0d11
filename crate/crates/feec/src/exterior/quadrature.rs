//! Numerical integration rules: Grundmann–Möller simplex rules, Gauss–
//! Legendre on intervals, and exact-degree product rules on balls.

use nalgebra::{DMatrix, SymmetricEigen};

/// Quadrature rule on the reference d-simplex in barycentric coordinates.
/// Weights sum to 1/d!, the reference volume, so that
/// ∫_S f dvol ≈ d!·vol(S)·Σ w_q f(x_q).
#[derive(Clone, Debug)]
pub struct SimplexRule {
    pub dim: usize,
    pub degree: usize,
    pub bary: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Grundmann–Möller rule exact for polynomials up to the requested degree
/// (rounded up to the next odd degree 2m+1).
pub fn grundmann_moeller(d: usize, requested_degree: usize) -> SimplexRule {
    let m = requested_degree.saturating_sub(1) / 2 + usize::from(requested_degree % 2 == 0);
    let s = 2 * m + 1;
    let mut bary = Vec::new();
    let mut weights = Vec::new();
    for i in 0..=m {
        let t = d + 1 + 2 * (m - i);
        let mut w = if i % 2 == 0 { 1.0 } else { -1.0 };
        w *= 0.5f64.powi(2 * m as i32);
        w *= (t as f64).powi(s as i32);
        for j in 1..=i {
            w /= j as f64;
        }
        for j in 1..=(d + 1 + 2 * m - i) {
            w /= j as f64;
        }
        for beta in compositions(m - i, d + 1) {
            let point: Vec<f64> = beta.iter().map(|&b| (2 * b + 1) as f64 / t as f64).collect();
            bary.push(point);
            weights.push(w);
        }
    }
    SimplexRule {
        dim: d,
        degree: s,
        bary,
        weights,
    }
}

/// All compositions of `total` into `parts` nonnegative integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; parts];
    fn rec(pos: usize, left: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
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

/// Gauss–Legendre nodes and weights on [-1, 1] via the Golub–Welsch
/// eigenvalue method.
pub fn gauss_legendre(points: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(points >= 1);
    let mut jacobi = DMatrix::zeros(points, points);
    for i in 1..points {
        let b = i as f64 / ((4 * i * i - 1) as f64).sqrt();
        jacobi[(i - 1, i)] = b;
        jacobi[(i, i - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..points)
        .map(|i| {
            let node = eig.eigenvalues[i];
            let weight = 2.0 * eig.eigenvectors[(0, i)].powi(2);
            (node, weight)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Gauss–Legendre rule transported to [a, b].
pub fn gauss_legendre_on(a: f64, b: f64, points: usize) -> (Vec<f64>, Vec<f64>) {
    let (nodes, weights) = gauss_legendre(points);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        nodes.iter().map(|x| mid + half * x).collect(),
        weights.iter().map(|w| half * w).collect(),
    )
}

/// Quadrature rule over a Euclidean ball, exact for polynomials up to the
/// given total degree.
#[derive(Clone, Debug)]
pub struct BallRule {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

pub fn ball_rule(center: &[f64], radius: f64, poly_degree: usize) -> BallRule {
    let n = center.len();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    match n {
        1 => {
            let q = poly_degree / 2 + 1;
            let (xs, ws) = gauss_legendre_on(center[0] - radius, center[0] + radius, q);
            for (x, w) in xs.iter().zip(&ws) {
                nodes.push(vec![*x]);
                weights.push(*w);
            }
        }
        2 => {
            // Polar: ∫_B f = ∫_0^ρ s ∫_0^{2π} f(c + s e(θ)) dθ ds.
            let q_r = (poly_degree + 2) / 2 + 1;
            let (rs, rws) = gauss_legendre_on(0.0, radius, q_r);
            let m = poly_degree + 2;
            let dw = 2.0 * std::f64::consts::PI / m as f64;
            for (s, rw) in rs.iter().zip(&rws) {
                for j in 0..m {
                    let th = dw * j as f64;
                    nodes.push(vec![center[0] + s * th.cos(), center[1] + s * th.sin()]);
                    weights.push(rw * s * dw);
                }
            }
        }
        3 => {
            // Spherical product: radial Gauss × Gauss in cos φ × uniform azimuth.
            let q_r = (poly_degree + 3) / 2 + 1;
            let (rs, rws) = gauss_legendre_on(0.0, radius, q_r);
            let q_u = poly_degree / 2 + 1;
            let (us, uws) = gauss_legendre(q_u);
            let m = poly_degree + 2;
            let dw = 2.0 * std::f64::consts::PI / m as f64;
            for (s, rw) in rs.iter().zip(&rws) {
                for (u, uw) in us.iter().zip(&uws) {
                    let sin_phi = (1.0 - u * u).max(0.0).sqrt();
                    for j in 0..m {
                        let th = dw * j as f64;
                        nodes.push(vec![
                            center[0] + s * sin_phi * th.cos(),
                            center[1] + s * sin_phi * th.sin(),
                            center[2] + s * u,
                        ]);
                        weights.push(rw * s * s * uw * dw);
                    }
                }
            }
        }
        n => panic!("ball quadrature implemented for n ≤ 3, got {n}"),
    }
    BallRule { nodes, weights }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gm_rule_integrates_constants() {
        for d in 1..=3 {
            for degree in [1, 3, 5, 7] {
                let rule = grundmann_moeller(d, degree);
                let total: f64 = rule.weights.iter().sum();
                let reference: f64 = 1.0 / (1..=d).map(|i| i as f64).product::<f64>();
                assert!(
                    (total - reference).abs() < 1e-12,
                    "d={d} degree={degree}: {total} vs {reference}"
                );
            }
        }
    }

    #[test]
    fn gauss_legendre_exactness() {
        let (xs, ws) = gauss_legendre(6);
        // Degree 11 monomials on [-1,1].
        for p in 0..=11u32 {
            let approx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(p as i32)).sum();
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            assert!((approx - exact).abs() < 1e-12, "x^{p}");
        }
    }

    /// Closed-form ∫_{B_ρ(0)} x^β dx for even multi-indices via the gamma
    /// function; odd powers vanish by symmetry.
    fn ball_monomial_exact(n: usize, radius: f64, beta: &[u32]) -> f64 {
        if beta.iter().any(|b| b % 2 == 1) {
            return 0.0;
        }
        fn gamma_half_int(two_a: u32) -> f64 {
            // Γ(a) for a = two_a / 2.
            if two_a % 2 == 0 {
                (1..two_a / 2).map(|i| i as f64).product()
            } else {
                let mut v = std::f64::consts::PI.sqrt();
                let mut a = 0.5;
                while (2.0 * a) < two_a as f64 {
                    v *= a;
                    a += 1.0;
                }
                v
            }
        }
        let total: u32 = beta.iter().sum();
        let sphere: f64 = 2.0
            * beta
                .iter()
                .map(|&b| gamma_half_int(b + 1))
                .product::<f64>()
            / gamma_half_int(total + n as u32);
        let radial = radius.powi((total + n as u32) as i32) / (total + n as u32) as f64;
        sphere * radial
    }

    #[test]
    fn ball_rule_matches_monomial_formula() {
        for n in 1..=3usize {
            let center = vec![0.0; n];
            let rule = ball_rule(&center, 0.8, 6);
            let mut betas = vec![vec![0u32; n]];
            if n >= 2 {
                let mut b = vec![0u32; n];
                b[0] = 2;
                b[1] = 4;
                betas.push(b);
                let mut b = vec![0u32; n];
                b[0] = 1;
                b[1] = 3;
                betas.push(b);
            }
            let mut b = vec![0u32; n];
            b[n - 1] = 6;
            betas.push(b);
            for beta in betas {
                let approx: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| {
                        w * x
                            .iter()
                            .zip(&beta)
                            .map(|(xi, &b)| xi.powi(b as i32))
                            .product::<f64>()
                    })
                    .sum();
                let exact = ball_monomial_exact(n, 0.8, &beta);
                assert!(
                    (approx - exact).abs() < 1e-12,
                    "n={n} beta={beta:?}: {approx} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn ball_rule_translated_center() {
        let rule = ball_rule(&[0.3, -0.2], 0.5, 4);
        // ∫ 1 = π ρ² independent of the center.
        let total: f64 = rule.weights.iter().sum();
        assert!((total - std::f64::consts::PI * 0.25).abs() < 1e-12);
        // ∫ x = c_x · π ρ².
        let mx: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| w * x[0])
            .sum();
        assert!((mx - 0.3 * std::f64::consts::PI * 0.25).abs() < 1e-12);
    }
}
