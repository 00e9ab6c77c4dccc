//! Strategies and property bodies shared by the property suite and the
//! acceptance runner.

#![allow(dead_code)]

use iles::{
    apply_tk, c_norm, gamma_k, lambda_norm, make_grid, rk4_integrate, weighted_l2, IlcParams,
    Iteration, OdeProblem, QuadraticMap, TimeGrid, Trajectory,
};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const HORIZON: f64 = 20.0;

pub fn grid() -> TimeGrid {
    make_grid(HORIZON, 0.05).unwrap()
}

/// A random scalar trajectory: a few smooth modes plus a non-smooth kink.
pub fn trajectory() -> impl Strategy<Value = Trajectory> {
    (
        prop::collection::vec(-2.0..2.0f64, 6),
        -1.0..1.0f64,
        0.0..HORIZON,
    )
        .prop_map(|(c, offset, kink)| {
            Trajectory::from_scalar_fn(grid(), move |t| {
                let mut v = offset + 0.3 * (t - kink).abs();
                for (m, a) in c.iter().enumerate() {
                    v += a * (0.4 * (m as f64 + 1.0) * t).sin();
                }
                v
            })
            .unwrap()
        })
}

pub fn ilc_params(beta: f64) -> IlcParams {
    IlcParams::new(0.1, beta, 1.0, QuadraticMap::sine_example(), grid(), 1).unwrap()
}

pub fn iteration() -> impl Strategy<Value = Iteration> {
    prop_oneof![(1usize..60).prop_map(Iteration::Finite), Just(Iteration::Limit)]
}

pub fn norm_equivalence(f: &Trajectory, lambda: f64) -> Result<(), TestCaseError> {
    let l = lambda_norm(f, lambda).unwrap();
    let c = c_norm(f);
    let horizon = f.grid().horizon();
    prop_assert!(l <= c);
    prop_assert!(c <= (lambda * horizon).exp() * l * (1.0 + 1e-12));
    prop_assert_eq!(lambda_norm(f, 0.0).unwrap(), c);
    Ok(())
}

pub fn norm_axioms(f: &Trajectory, g: &Trajectory, a: f64, lambda: f64) -> Result<(), TestCaseError> {
    let sum = f.checked_add(g).unwrap();
    let scaled = f.scale(a).unwrap();
    let norms: [&dyn Fn(&Trajectory) -> f64; 3] = [
        &|x| lambda_norm(x, lambda).unwrap(),
        &|x| c_norm(x),
        &|x| weighted_l2(x, lambda).unwrap(),
    ];
    for n in norms {
        let (nf, ng) = (n(f), n(g));
        prop_assert!(n(&sum) <= (nf + ng) * (1.0 + 1e-12) + 1e-15);
        prop_assert!((n(&scaled) - a.abs() * nf).abs() <= 1e-12 * (1.0 + a.abs() * nf));
    }
    Ok(())
}

pub fn lambda_monotone(f: &Trajectory, l1: f64, l2: f64) -> Result<(), TestCaseError> {
    let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
    prop_assert!(lambda_norm(f, hi).unwrap() <= lambda_norm(f, lo).unwrap());
    Ok(())
}

pub fn tk_linearity(
    u: &Trajectory,
    v: &Trajectory,
    a: f64,
    b: f64,
    beta: f64,
    k: Iteration,
) -> Result<(), TestCaseError> {
    let p = ilc_params(beta);
    let lhs = apply_tk(&u.linear_combination(a, v, b).unwrap(), &p, k).unwrap();
    let rhs = apply_tk(u, &p, k)
        .unwrap()
        .linear_combination(a, &apply_tk(v, &p, k).unwrap(), b)
        .unwrap();
    let gap = c_norm(&lhs.checked_sub(&rhs).unwrap());
    let scale = 1.0 + c_norm(&lhs);
    prop_assert!(gap <= 1e-10 * scale, "gap {gap}");
    Ok(())
}

pub fn gamma_bounds(beta: f64, k: usize) -> Result<(), TestCaseError> {
    let g = gamma_k(beta, k).unwrap();
    let next = gamma_k(beta, k + 1).unwrap();
    prop_assert!((1.0..=1.0 / beta * (1.0 + 1e-12)).contains(&g));
    prop_assert!(next >= g);
    prop_assert!(((1.0 - beta) * g + 1.0 - next).abs() <= 1e-12 * next);
    Ok(())
}

fn decay_error(rate: f64, dt: f64) -> f64 {
    let grid = make_grid(1.0, dt).unwrap();
    let p = OdeProblem::new(grid, vec![1.0], move |_t, x: &[f64], out: &mut [f64]| {
        out[0] = -rate * x[0]
    });
    let x = rk4_integrate(&p).unwrap();
    (x.row(grid.count())[0] - (-rate).exp()).abs()
}

pub fn rk4_order(rate: f64) -> Result<(), TestCaseError> {
    let ratio = decay_error(rate, 0.1) / decay_error(rate, 0.05);
    prop_assert!((12.0..=20.0).contains(&ratio), "ratio {ratio} at rate {rate}");
    Ok(())
}

pub fn tk_determinism(u: &Trajectory, beta: f64, k: Iteration) -> Result<(), TestCaseError> {
    let p = ilc_params(beta);
    let a = apply_tk(u, &p, k).unwrap();
    let b = apply_tk(u, &p, k).unwrap();
    prop_assert!(a
        .samples()
        .iter()
        .zip(b.samples())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
    Ok(())
}
