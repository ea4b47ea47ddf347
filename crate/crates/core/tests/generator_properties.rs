use gemdiff::gem_generator::{
    apply_finite_generator, apply_generator, coeff_a, coeff_b, coeff_bound, drift_bound, gamma, pullback_gradient,
    CylinderFunction, FiniteDifference, GeneratorCoeffs, Monomial, ParamSeq, Polynomial, Pullback, COEFF_BOUND,
};
use gemdiff::stick_breaking::{phi, GemParams, SimplexPoint, StickPoint};
use proptest::prelude::*;

fn sticks(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.02f64..0.98, n)
}

fn params(n: usize) -> impl Strategy<Value = ParamSeq> {
    proptest::collection::vec((0.05f64..3.0, 0.05f64..3.0), n).prop_map(|v| ParamSeq::from_pairs(&v).unwrap())
}

fn polynomial(m: usize) -> impl Strategy<Value = Polynomial> {
    let term = (-2.0f64..2.0, proptest::collection::vec(0u32..3, m))
        .prop_map(|(coeff, exponents)| Monomial { coeff, exponents });
    proptest::collection::vec(term, 1..4).prop_map(Polynomial::new)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn diffusion_matrix_symmetric_and_psd(u in sticks(6)) {
        let y = phi(&StickPoint::new(u).unwrap());
        let a = GeneratorCoeffs::diffusion_at(&y, 6);
        for i in 0..6 {
            for j in 0..6 {
                prop_assert_eq!(a[(i, j)], a[(j, i)]);
                prop_assert!(relative(a[(i, j)], coeff_a(&y, i, j)) < 1e-14);
            }
        }
        let c = GeneratorCoeffs::at(&y, &ParamSeq::constant(1.0, 1.0, 6).unwrap(), 6);
        prop_assert!(c.min_eigenvalue() >= -1e-10);
    }

    #[test]
    fn total_variation_at_most_three(u in sticks(12)) {
        let y = phi(&StickPoint::new(u).unwrap());
        let b = coeff_bound(&y);
        prop_assert!(b.pass && b.value <= COEFF_BOUND + 1e-9, "{}", b.value);
    }

    #[test]
    fn drift_within_bound(u in sticks(8), p in params(8)) {
        let y = phi(&StickPoint::new(u).unwrap());
        for i in 0..8 {
            prop_assert!(coeff_b(&y, &p, i).abs() <= drift_bound(&y, &p, i) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn generator_conjugate_to_product_generator(u in sticks(4), p in params(4), f in polynomial(3)) {
        let x = StickPoint::new(u).unwrap();
        let y = phi(&x);
        let lhs = apply_finite_generator(&Pullback::new(&f, 4).unwrap(), &x, &p);
        let rhs = apply_generator(&f, &y, &p);
        prop_assert!(relative(lhs, rhs) < 1e-8, "{lhs} vs {rhs}");
    }

    #[test]
    fn pullback_gradient_matches_finite_differences(u in sticks(4), f in polynomial(3)) {
        let x = StickPoint::new(u.clone()).unwrap();
        let g = pullback_gradient(&f, &x).unwrap();
        let fd = FiniteDifference::new(4, |v: &[f64]| f.value(phi(&StickPoint::new(v.to_vec()).unwrap()).weights()));
        let h = fd.gradient(&u);
        for i in 0..4 {
            prop_assert!(relative(g[i], h[i]) < 1e-6, "coordinate {i}: {} vs {}", g[i], h[i]);
        }
    }

    #[test]
    fn carre_du_champ_is_bilinear_and_symmetric(u in sticks(4), f in polynomial(3), g in polynomial(3)) {
        let y = phi(&StickPoint::new(u).unwrap());
        let fg = gamma(&f, &g, &y);
        prop_assert!(relative(fg, gamma(&g, &f, &y)) < 1e-12);
        prop_assert!(gamma(&f, &f, &y) >= -1e-12);
        // ℒ(fg) - fℒg - gℒf = 2Γ(f,g) for the second-order operator without ½
        let p = ParamSeq::constant(0.7, 1.3, 3).unwrap();
        let w = y.weights();
        let prod = FiniteDifference::new(3, |v: &[f64]| f.value(v) * g.value(v));
        let lhs = apply_generator(&prod, &y, &p)
            - f.value(w) * apply_generator(&g, &y, &p)
            - g.value(w) * apply_generator(&f, &y, &p);
        prop_assert!((lhs - 2.0 * fg).abs() < 1e-4 * (1.0 + fg.abs()), "{lhs} vs {}", 2.0 * fg);
    }
}

#[test]
fn pushforward_matches_jacobian_oracle_under_gem() {
    use gemdiff::RngStream;
    let gem = GemParams::new(0.3, 1.0).unwrap();
    let p = ParamSeq::from_gem(&gem, 5).unwrap();
    let mut rng = RngStream::new(7, 0);
    for _ in 0..200 {
        let y = p.sample_stationary(5, &mut rng);
        if !y.is_interior() {
            continue;
        }
        let x = gemdiff::stick_breaking::phi_inverse(&y).unwrap();
        // identity functions: L_n(φ_i) = b_i, Γ(φ_i, φ_j) = a_ij
        for i in 0..5 {
            let fi = Polynomial::coordinate(i);
            let lhs = apply_finite_generator(&Pullback::new(&fi, 5).unwrap(), &x, &p);
            assert!(relative(lhs, coeff_b(&y, &p, i)) < 1e-9);
        }
    }
}

#[test]
fn boundary_point_has_zero_coefficients() {
    let y = SimplexPoint::new(vec![0.0, 0.6, 0.3], 0.1).unwrap();
    let p = ParamSeq::one_parameter(1.0, 3).unwrap();
    for j in 0..3 {
        assert_eq!(coeff_a(&y, 0, j), 0.0);
    }
    assert_eq!(coeff_b(&y, &p, 0), 0.0);
    assert!(coeff_b(&y, &p, 1).is_finite());
}
