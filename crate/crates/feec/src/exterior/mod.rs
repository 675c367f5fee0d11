//! Exact polynomial exterior calculus on simplices plus quadrature and norms
//! for sampled (non-polynomial) forms.

pub mod chart;
pub mod norms;
pub mod polyform;
pub mod quadrature;
pub mod sampled;

pub use chart::Chart;
pub use norms::{
    l2_inner_fn_poly, l2_inner_poly, l2_inner_sampled_poly, lp_norm_diff, lp_norm_poly,
    pair_poly, pair_poly_sampled, LpExponent,
};
pub use polyform::{
    bary_monomial_integral, cartesian_to_bary_frame, coordinate_differential, coordinate_form,
    euclidean_norm, subsets_k, volume_form, BaryMonomial, PolyForm, Term, WedgeIndex,
};
pub use quadrature::{ball_rule, gauss_legendre, gauss_legendre_on, grundmann_moeller, BallRule, SimplexRule};
pub use sampled::{CoeffFn, DerivFn, SampledForm};

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::mesh::{build_complex, unit_square_mesh};

    fn reference_triangle() -> Arc<Chart> {
        Chart::reference(2)
    }

    fn random_form(chart: &Arc<Chart>, k: usize, r: u32, rng: &mut ChaCha8Rng) -> PolyForm {
        let d = chart.dim();
        let mut acc = PolyForm::zero(chart.clone(), k);
        for wedge in subsets_k(1, d as u8 + 1, k) {
            // A few random monomial terms per wedge.
            for _ in 0..3 {
                let mut mono = vec![0u32; d + 1];
                for _ in 0..rng.gen_range(0..=r) {
                    mono[rng.gen_range(0..=d)] += 1;
                }
                let coeff: f64 = rng.gen_range(-1.0..1.0);
                let term = polyform::Term {
                    coeff,
                    mono: BaryMonomial(mono),
                    wedge: WedgeIndex(wedge.clone()),
                };
                acc = acc.add(&PolyForm::new(chart.clone(), k, vec![term]));
            }
        }
        acc
    }

    #[test]
    fn wedge_basis_and_anticommutativity() {
        let chart = reference_triangle();
        let d1 = PolyForm::bary_differential(chart.clone(), 1);
        let d2 = PolyForm::bary_differential(chart.clone(), 2);
        let w12 = d1.wedge(&d2).unwrap();
        assert_eq!(w12.terms().len(), 1);
        assert_eq!(w12.terms()[0].wedge.0, vec![1, 2]);
        assert!((w12.terms()[0].coeff - 1.0).abs() < 1e-15);

        let w21 = d2.wedge(&d1).unwrap();
        assert!(w21.add(&w12).coeff_norm() < 1e-15);

        // (λ₀ dλ₁) ∧ (λ₁ dλ₂) = λ₀λ₁ dλ₁∧dλ₂.
        let a = PolyForm::bary_coord(chart.clone(), 0).wedge(&d1).unwrap();
        let b = PolyForm::bary_coord(chart.clone(), 1).wedge(&d2).unwrap();
        let ab = a.wedge(&b).unwrap();
        assert_eq!(ab.terms().len(), 1);
        let t = &ab.terms()[0];
        assert_eq!(t.mono.0, vec![1, 1, 0]);
        assert_eq!(t.wedge.0, vec![1, 2]);
        assert!((t.coeff - 1.0).abs() < 1e-15);
    }

    #[test]
    fn graded_anticommutativity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let chart = Chart::reference(3);
        for (k, l) in [(1usize, 1usize), (1, 2), (0, 2)] {
            let a = random_form(&chart, k, 2, &mut rng);
            let b = random_form(&chart, l, 2, &mut rng);
            let ab = a.wedge(&b).unwrap();
            let ba = b.wedge(&a).unwrap();
            let sign = if (k * l) % 2 == 0 { 1.0 } else { -1.0 };
            assert!(ab.coeff_distance(&ba.scale(sign)) < 1e-13);
        }
    }

    #[test]
    fn exterior_derivative_basics() {
        let chart = reference_triangle();
        let l1 = PolyForm::bary_coord(chart.clone(), 1);
        assert!(l1
            .exterior_derivative()
            .coeff_distance(&PolyForm::bary_differential(chart.clone(), 1))
            < 1e-15);

        let l0 = PolyForm::bary_coord(chart.clone(), 0);
        let expect = PolyForm::bary_differential(chart.clone(), 1)
            .add(&PolyForm::bary_differential(chart.clone(), 2))
            .scale(-1.0);
        assert!(l0.exterior_derivative().coeff_distance(&expect) < 1e-15);

        // d(λ₁ dλ₂) = dλ₁ ∧ dλ₂ in 2D.
        let form = l1
            .wedge(&PolyForm::bary_differential(chart.clone(), 2))
            .unwrap();
        let dd = form.exterior_derivative();
        let expect = PolyForm::bary_differential(chart.clone(), 1)
            .wedge(&PolyForm::bary_differential(chart.clone(), 2))
            .unwrap();
        assert!(dd.coeff_distance(&expect) < 1e-15);
    }

    #[test]
    fn d_after_d_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..=3usize {
            let chart = Chart::reference(n);
            for k in 0..n {
                for _ in 0..20 {
                    let form = random_form(&chart, k, 4, &mut rng);
                    let dd = form.exterior_derivative().exterior_derivative();
                    assert!(
                        dd.coeff_norm() < 1e-12,
                        "n={n} k={k}: ddω = {:.3e}",
                        dd.coeff_norm()
                    );
                }
            }
        }
    }

    #[test]
    fn leibniz_rule_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let chart = Chart::reference(3);
        for (k, l) in [(0usize, 1usize), (1, 1), (0, 2)] {
            for _ in 0..10 {
                let a = random_form(&chart, k, 3, &mut rng);
                let b = random_form(&chart, l, 3, &mut rng);
                let lhs = a.wedge(&b).unwrap().exterior_derivative();
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let rhs = a
                    .exterior_derivative()
                    .wedge(&b)
                    .unwrap()
                    .add(&a.wedge(&b.exterior_derivative()).unwrap().scale(sign));
                assert!(lhs.coeff_distance(&rhs) < 1e-12);
            }
        }
    }

    #[test]
    fn koszul_examples() {
        // Reference triangle has vertex 0 at the origin, so dx₁ = dλ₁ and the
        // base point 0 has barycentric coordinates (1,0,0).
        let chart = reference_triangle();
        let base = vec![1.0, 0.0, 0.0];
        let dx1 = coordinate_differential(&chart, 0);
        let x1 = coordinate_form(&chart, 0);
        assert!(dx1.koszul(&base).coeff_distance(&x1) < 1e-14);

        let dx2 = coordinate_differential(&chart, 1);
        let x2 = coordinate_form(&chart, 1);
        let area = dx1.wedge(&dx2).unwrap();
        let expect = x1
            .wedge(&dx2)
            .unwrap()
            .sub(&x2.wedge(&dx1).unwrap());
        assert!(area.koszul(&base).coeff_distance(&expect) < 1e-14);
    }

    #[test]
    fn koszul_squared_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let chart = Chart::reference(3);
        for k in 2..=3usize {
            for _ in 0..10 {
                let form = random_form(&chart, k, 3, &mut rng);
                let kk = form.koszul_barycenter().koszul_barycenter();
                assert!(kk.coeff_norm() < 1e-12);
            }
        }
    }

    #[test]
    fn koszul_homotopy_on_homogeneous_forms() {
        // (dκ + κd) ω = (r + k) ω for ω with Cartesian-homogeneous
        // coefficients of degree r about the base point.
        let chart = Chart::new(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.3, 0.9]],
            1,
        );
        let base = chart.barycentric(&[0.0, 0.0]);
        // ω = x₁x₂ dx₂: r = 2, k = 1.
        let omega = PolyForm::from_cartesian(chart.clone(), 1, &[(vec![1], vec![1, 1], 1.0)]);
        let lhs = omega
            .koszul(&base)
            .exterior_derivative()
            .add(&omega.exterior_derivative().koszul(&base));
        assert!(lhs.coeff_distance(&omega.scale(3.0)) < 1e-12);

        // ω = x₂² dx₁∧dx₂: r = 2, k = 2 → factor 4.
        let omega = PolyForm::from_cartesian(chart.clone(), 2, &[(vec![0, 1], vec![0, 2], 1.0)]);
        let lhs = omega.koszul(&base).exterior_derivative();
        assert!(lhs.coeff_distance(&omega.scale(4.0)) < 1e-12);
    }

    #[test]
    fn trace_examples() {
        let chart = reference_triangle();
        let edge12 = Chart::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1);
        // λ₀ vanishes on the opposite edge.
        let l0 = PolyForm::bary_coord(chart.clone(), 0);
        assert!(l0.trace(&edge12, &[1, 2]).unwrap().is_zero());

        // Top-degree drop: a 2-form dies on an edge.
        let area = PolyForm::bary_differential(chart.clone(), 1)
            .wedge(&PolyForm::bary_differential(chart.clone(), 2))
            .unwrap();
        assert!(area.trace(&edge12, &[1, 2]).unwrap().is_zero());
    }

    #[test]
    fn trace_commutes_with_d_and_wedge() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let chart = Chart::new(
            vec![
                vec![0.0, 0.0, 0.0],
                vec![1.0, 0.1, 0.0],
                vec![0.2, 1.0, 0.0],
                vec![0.1, 0.3, 1.2],
            ],
            1,
        );
        let face = Chart::new(
            vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.1, 0.0], vec![0.2, 1.0, 0.0]],
            1,
        );
        let keep = [0usize, 1, 2];
        for _ in 0..20 {
            let k = rng.gen_range(0..=1usize);
            let form = random_form(&chart, k, 3, &mut rng);
            let a = form.exterior_derivative().trace(&face, &keep).unwrap();
            let b = form.trace(&face, &keep).unwrap().exterior_derivative();
            assert!(a.coeff_distance(&b) < 1e-12);

            let other = random_form(&chart, 1, 2, &mut rng);
            let lhs = form.wedge(&other).unwrap().trace(&face, &keep).unwrap();
            let rhs = form
                .trace(&face, &keep)
                .unwrap()
                .wedge(&other.trace(&face, &keep).unwrap())
                .unwrap();
            assert!(lhs.coeff_distance(&rhs) < 1e-12);
        }
    }

    #[test]
    fn trace_is_functorial() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let chart = Chart::reference(3);
        let face = Chart::new(
            vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
            1,
        );
        let edge = Chart::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], 1);
        for _ in 0..10 {
            let form = random_form(&chart, 1, 3, &mut rng);
            let via_face = form
                .trace(&face, &[0, 1, 2])
                .unwrap()
                .trace(&edge, &[1, 2])
                .unwrap();
            let direct = form.trace(&edge, &[1, 2]).unwrap();
            assert!(via_face.coeff_distance(&direct) < 1e-12);
        }
    }

    #[test]
    fn integrate_monomials_on_unit_triangle() {
        let chart = reference_triangle();
        let vol = volume_form(&chart);
        assert!((vol.integrate().unwrap() - 0.5).abs() < 1e-15);

        let l0vol = PolyForm::bary_coord(chart.clone(), 0).wedge(&vol).unwrap();
        assert!((l0vol.integrate().unwrap() - 1.0 / 6.0).abs() < 1e-15);

        let l0l1vol = PolyForm::bary_coord(chart.clone(), 0)
            .wedge(&PolyForm::bary_coord(chart.clone(), 1))
            .unwrap()
            .wedge(&vol)
            .unwrap();
        assert!((l0l1vol.integrate().unwrap() - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn integrate_matches_monte_carlo() {
        // Monte-Carlo oracle over the unit triangle for λ₀λ₁.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut acc = 0.0;
        let samples = 200_000;
        for _ in 0..samples {
            let (mut u, mut v): (f64, f64) = (rng.gen(), rng.gen());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let l0 = 1.0 - u - v;
            acc += l0 * u;
        }
        let mc = 0.5 * acc / samples as f64;
        assert!((mc - 1.0 / 24.0).abs() < 1e-3);
    }

    #[test]
    fn stokes_on_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let complex = unit_square_mesh(0);
        for &t in complex.cells() {
            let chart = Chart::of_simplex(&complex, t);
            for _ in 0..10 {
                let omega = random_form(&chart, complex.n - 1, 3, &mut rng);
                let lhs = omega.exterior_derivative().integrate().unwrap();
                let mut rhs = 0.0;
                for &(f, sign) in complex.facets_of_cell(t) {
                    let fchart = Chart::of_simplex(&complex, f);
                    let keep = local_positions(&complex, f, t);
                    let tr = omega.trace(&fchart, &keep).unwrap();
                    rhs += sign as f64 * tr.integrate().unwrap();
                }
                assert!((lhs - rhs).abs() < 1e-12, "Stokes residual {}", lhs - rhs);
            }
        }

        let tet = build_complex(
            vec![
                vec![0.0, 0.0, 0.0],
                vec![1.1, 0.0, 0.0],
                vec![0.2, 0.9, 0.0],
                vec![0.3, 0.1, 1.4],
            ],
            vec![vec![0, 1, 2, 3]],
        )
        .unwrap();
        let t = tet.cells()[0];
        let chart = Chart::of_simplex(&tet, t);
        for _ in 0..10 {
            let omega = random_form(&chart, 2, 2, &mut rng);
            let lhs = omega.exterior_derivative().integrate().unwrap();
            let mut rhs = 0.0;
            for &(f, sign) in tet.facets_of_cell(t) {
                let fchart = Chart::of_simplex(&tet, f);
                let keep = local_positions(&tet, f, t);
                let tr = omega.trace(&fchart, &keep).unwrap();
                rhs += sign as f64 * tr.integrate().unwrap();
            }
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    fn local_positions(
        complex: &crate::mesh::SimplicialComplex,
        sub: crate::mesh::SimplexId,
        sup: crate::mesh::SimplexId,
    ) -> Vec<usize> {
        let sub_v = &complex.simplex(sub).vertex_ids;
        let sup_v = &complex.simplex(sup).vertex_ids;
        sub_v
            .iter()
            .map(|v| sup_v.iter().position(|w| w == v).unwrap())
            .collect()
    }

    #[test]
    fn quadrature_matches_exact_integration() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for d in 2..=3usize {
            let chart = Chart::reference(d);
            let top = random_form(&chart, d, 4, &mut rng);
            let exact = top.integrate().unwrap();
            // Integrate the frame coefficient of dλ_{1..d} with the GM rule.
            let rule = grundmann_moeller(d, 6);
            let approx: f64 = rule
                .bary
                .iter()
                .zip(&rule.weights)
                .map(|(b, w)| w * top.eval_bary(b)[0])
                .sum();
            assert!((approx - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrature_sin_product_matches_tensor_gauss() {
        // ∫ over the unit triangle of sin(πx) sin(πy).
        // d!·vol = 1 for the unit triangle, so the bare weighted sum applies.
        let chart = reference_triangle();
        let rule = grundmann_moeller(2, 20);
        let approx: f64 = rule
            .bary
            .iter()
            .zip(&rule.weights)
            .map(|(b, w)| {
                let x = chart.point(b);
                w * (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).sin()
            })
            .sum();
        // Oracle: nested Gauss–Legendre, inner range [0, 1−x].
        let (xs, ws) = gauss_legendre_on(0.0, 1.0, 24);
        let mut oracle = 0.0;
        for (x, wx) in xs.iter().zip(&ws) {
            let (ys, wys) = gauss_legendre_on(0.0, 1.0 - x, 24);
            for (y, wy) in ys.iter().zip(&wys) {
                oracle += wx
                    * wy
                    * (std::f64::consts::PI * x).sin()
                    * (std::f64::consts::PI * y).sin();
            }
        }
        assert!(
            (approx - oracle).abs() < 1e-8,
            "GM {approx} vs nested Gauss {oracle}"
        );
    }

    #[test]
    fn quadrature_error_decreases_with_order() {
        let chart = reference_triangle();
        let integrand = |b: &[f64]| {
            let x = chart.point(b);
            (3.0 * x[0] + 1.0).exp() * (2.0 * x[1]).cos()
        };
        let reference = {
            let rule = grundmann_moeller(2, 30);
            rule.bary
                .iter()
                .zip(&rule.weights)
                .map(|(b, w)| w * integrand(b))
                .sum::<f64>()
        };
        let mut errors = Vec::new();
        for order in [3, 7, 11] {
            let rule = grundmann_moeller(2, order);
            let v: f64 = rule
                .bary
                .iter()
                .zip(&rule.weights)
                .map(|(b, w)| w * integrand(b))
                .sum();
            errors.push((v - reference).abs());
        }
        assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
    }

    #[test]
    fn lp_norm_examples() {
        let complex = unit_square_mesh(0);
        let cells: Vec<_> = complex.cells().to_vec();

        let zero = SampledForm::zero(2, 1);
        let norm = lp_norm_diff(&complex, &cells, &zero, |_| None, LpExponent::Two, 4);
        assert!(norm < 1e-15);

        // Constant 1-form dx on the unit square: ‖dx‖_{L²} = 1.
        let dx = SampledForm::new(2, 1, Arc::new(|_: &[f64]| vec![1.0, 0.0]));
        let norm = lp_norm_diff(&complex, &cells, &dx, |_| None, LpExponent::Two, 4);
        assert!((norm - 1.0).abs() < 1e-12);

        // Homogeneity ‖cω‖ = |c|·‖ω‖.
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..5 {
            let c: f64 = rng.gen_range(-3.0..3.0);
            let f = SampledForm::new(
                2,
                1,
                Arc::new(move |x: &[f64]| vec![c * (x[0] + 0.2), c * x[1] * x[1]]),
            );
            let base = SampledForm::new(
                2,
                1,
                Arc::new(move |x: &[f64]| vec![x[0] + 0.2, x[1] * x[1]]),
            );
            for p in [LpExponent::One, LpExponent::Two, LpExponent::Infinity] {
                let a = lp_norm_diff(&complex, &cells, &f, |_| None, p, 8);
                let b = lp_norm_diff(&complex, &cells, &base, |_| None, p, 8);
                assert!((a - c.abs() * b).abs() < 1e-12 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn pairing_poly_vs_sampled_agree() {
        // ∫_T a ∧ b computed exactly and by quadrature through the Cartesian
        // frame round-trip.
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let chart = Chart::new(
            vec![vec![0.1, -0.2], vec![1.3, 0.2], vec![0.4, 1.1]],
            1,
        );
        for _ in 0..5 {
            let a = random_form(&chart, 1, 2, &mut rng);
            let b = random_form(&chart, 1, 2, &mut rng);
            let exact = pair_poly(&a, &b).unwrap();
            let b_clone = b.clone();
            let chart_clone = chart.clone();
            let approx = pair_poly_sampled(
                &a,
                move |x: &[f64]| {
                    let bary = chart_clone.barycentric(x);
                    b_clone.eval_cartesian(&bary)
                },
                8,
            );
            assert!((exact - approx).abs() < 1e-12, "{exact} vs {approx}");
        }
    }

    #[test]
    fn l2_inner_poly_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let chart = Chart::new(
            vec![vec![0.0, 0.0], vec![2.0, 0.1], vec![0.3, 1.7]],
            1,
        );
        for k in 0..=2usize {
            let a = random_form(&chart, k, 2, &mut rng);
            let b = random_form(&chart, k, 2, &mut rng);
            let exact = l2_inner_poly(&a, &b);
            let rule = grundmann_moeller(2, 8);
            let scale = 2.0 * chart.volume;
            let approx: f64 = rule
                .bary
                .iter()
                .zip(&rule.weights)
                .map(|(bary, w)| {
                    let av = a.eval_cartesian(bary);
                    let bv = b.eval_cartesian(bary);
                    scale * w * av.iter().zip(&bv).map(|(x, y)| x * y).sum::<f64>()
                })
                .sum();
            assert!((exact - approx).abs() < 1e-11, "k={k}: {exact} vs {approx}");
        }
    }
}
