mod common;

use common::*;
use iles::{
    analysis::{bound_dy, contraction_params, rho},
    run_campaign, IlesConfig, QuadraticMap, Retain,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn norms_are_equivalent(f in trajectory(), lambda in 0.0..2.0f64) {
        norm_equivalence(&f, lambda)?;
    }

    #[test]
    fn norms_are_homogeneous_and_subadditive(
        f in trajectory(),
        g in trajectory(),
        a in -5.0..5.0f64,
        lambda in 0.0..2.0f64,
    ) {
        norm_axioms(&f, &g, a, lambda)?;
    }

    #[test]
    fn lambda_norm_decreases_in_lambda(f in trajectory(), l1 in 0.0..3.0f64, l2 in 0.0..3.0f64) {
        lambda_monotone(&f, l1, l2)?;
    }

    #[test]
    fn interp_is_exact_at_nodes(f in trajectory(), i in 0usize..401) {
        let t = f.grid().time(i);
        prop_assert_eq!(f.interp(t).unwrap()[0].to_bits(), f.row(i)[0].to_bits());
    }

    #[test]
    fn tk_is_linear(
        u in trajectory(),
        v in trajectory(),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        beta in 0.05..0.95f64,
        k in iteration(),
    ) {
        tk_linearity(&u, &v, a, b, beta, k)?;
    }

    #[test]
    fn tk_is_deterministic(u in trajectory(), beta in 0.05..0.95f64, k in iteration()) {
        tk_determinism(&u, beta, k)?;
    }

    #[test]
    fn gamma_is_bounded_and_increasing(beta in 0.01..=1.0f64, k in 1usize..500) {
        gamma_bounds(beta, k)?;
    }

    #[test]
    fn rk4_is_fourth_order(rate in 0.5..3.0f64) {
        rk4_order(rate)?;
    }

    #[test]
    fn rho_decreases_in_lambda_and_beta(
        alpha in 0.01..2.0f64,
        beta in 0.05..0.9f64,
        lambda in 0.0..5.0f64,
        n in 1usize..5,
    ) {
        prop_assert!(rho(alpha, 1.0, beta, n, lambda + 0.1) <= rho(alpha, 1.0, beta, n, lambda));
        prop_assert!(rho(alpha, 1.0, beta + 0.05, n, lambda) <= rho(alpha, 1.0, beta, n, lambda));
        let lo = contraction_params(alpha, 1.0, beta, n, lambda).unwrap();
        let hi = contraction_params(alpha, 1.0, beta + 0.05, n, lambda).unwrap();
        prop_assert!(hi.lambda0 <= lo.lambda0);
        if lambda > lo.lambda0 {
            prop_assert!(lo.rho < 1.0);
        }
    }

    #[test]
    fn dy_is_linear_in_d1(r in 0.01..0.99f64, d1 in 0.0..10.0f64) {
        prop_assert!((bound_dy(r, 2.0 * d1) - 2.0 * bound_dy(r, d1)).abs() <= 1e-12 * (1.0 + d1));
    }
}

#[test]
fn campaigns_are_bit_identical_on_rerun() {
    let map = QuadraticMap::sine_example();
    let cfg = IlesConfig::new(0.1, 0.3, 15.0, 20.0, 0.01, 3, 64, 1.0).unwrap();
    let a = run_campaign(&map, &cfg, &Retain::All).unwrap();
    let b = run_campaign(&map, &cfg, &Retain::All).unwrap();
    assert_eq!(a.reports, b.reports);
    for (x, y) in a.retained.iter().zip(&b.retained) {
        assert!(x.x.samples().iter().zip(y.x.samples()).all(|(p, q)| p.to_bits() == q.to_bits()));
        assert!(x.z.samples().iter().zip(y.z.samples()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}
