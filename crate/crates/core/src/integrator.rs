//! Fixed-step classical Runge–Kutta integration on a [`TimeGrid`].

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::trajectory::{TimeGrid, Trajectory};

/// Default number of RK4 steps per dither period.
pub const DEFAULT_STEPS_PER_DITHER_PERIOD: usize = 64;

/// `ẋ = rhs(t, x)`, `x(0) = x0`, integrated over `grid`.
pub struct OdeProblem<F> {
    pub grid: TimeGrid,
    pub x0: Vec<f64>,
    pub rhs: F,
}

impl<F> OdeProblem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    pub fn new(grid: TimeGrid, x0: Vec<f64>, rhs: F) -> Self {
        OdeProblem { grid, x0, rhs }
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }
}

/// States and the right-hand side evaluated at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedSolution {
    pub states: Trajectory,
    pub derivatives: Trajectory,
}

/// Classical RK4 on the fixed grid. The returned trajectory starts at `x0`.
pub fn rk4_integrate<F>(p: &OdeProblem<F>) -> Result<Trajectory>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    Ok(rk4_integrate_recorded(p)?.states)
}

/// As [`rk4_integrate`], also recording `rhs(t_i, x_i)` at each node.
///
/// The recording reuses the first stage of every step, so it is the exact
/// derivative of the discrete flow at the nodes rather than a finite
/// difference of the states.
pub fn rk4_integrate_recorded<F>(p: &OdeProblem<F>) -> Result<RecordedSolution>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = p.dim();
    if n == 0 {
        return Err(invalid("ODE state must have at least one component"));
    }
    if p.x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { t: 0.0 });
    }
    let grid = p.grid;
    let h = grid.step();
    let nodes = grid.len();
    let mut states = Vec::with_capacity(nodes * n);
    let mut derivs = Vec::with_capacity(nodes * n);
    states.extend_from_slice(&p.x0);

    let mut x = p.x0.clone();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    for i in 0..grid.count() {
        let t = grid.time(i);
        let t_half = t + 0.5 * h;
        let t_next = grid.time(i + 1);
        (p.rhs)(t, &x, &mut k1);
        derivs.extend_from_slice(&k1);
        for j in 0..n {
            tmp[j] = x[j] + 0.5 * h * k1[j];
        }
        (p.rhs)(t_half, &tmp, &mut k2);
        for j in 0..n {
            tmp[j] = x[j] + 0.5 * h * k2[j];
        }
        (p.rhs)(t_half, &tmp, &mut k3);
        for j in 0..n {
            tmp[j] = x[j] + h * k3[j];
        }
        (p.rhs)(t_next, &tmp, &mut k4);
        for j in 0..n {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t: t_next });
        }
        states.extend_from_slice(&x);
    }
    (p.rhs)(grid.horizon(), &x, &mut k1);
    if k1.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { t: grid.horizon() });
    }
    derivs.extend_from_slice(&k1);
    if let Some(pos) = derivs.iter().position(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            t: grid.time(pos / n),
        });
    }

    Ok(RecordedSolution {
        states: Trajectory::new(grid, n, states)?,
        derivatives: Trajectory::new(grid, n, derivs)?,
    })
}

/// Step that resolves one dither period `2π/ω` with the given number of steps.
pub fn recommended_dt(omega: f64, steps_per_dither_period: usize) -> Result<f64> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(invalid(format!("omega must be positive, got {omega}")));
    }
    if steps_per_dither_period == 0 {
        return Err(invalid("steps per dither period must be at least 1"));
    }
    Ok(2.0 * PI / omega / steps_per_dither_period as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::make_grid;
    use approx::assert_relative_eq;

    fn decay_error(dt: f64) -> f64 {
        let grid = make_grid(1.0, dt).unwrap();
        let p = OdeProblem::new(grid, vec![1.0], |_t, x: &[f64], out: &mut [f64]| out[0] = -x[0]);
        let sol = rk4_integrate(&p).unwrap();
        (sol.row(grid.count())[0] - (-1.0f64).exp()).abs()
    }

    #[test]
    fn zero_field_is_constant() {
        let grid = make_grid(2.0, 0.1).unwrap();
        let p = OdeProblem::new(grid, vec![3.0, -1.0], |_t, _x: &[f64], out: &mut [f64]| {
            out.fill(0.0)
        });
        let sol = rk4_integrate(&p).unwrap();
        assert!(sol.rows().all(|r| r == [3.0, -1.0]));
    }

    #[test]
    fn exponential_decay_accuracy() {
        assert!(decay_error(1e-3) < 1e-10);
    }

    #[test]
    fn fourth_order_convergence() {
        let ratio = decay_error(0.1) / decay_error(0.05);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn relaxation_to_constant() {
        let (gamma, c) = (0.8, 1.7);
        let grid = make_grid(5.0, 1e-3).unwrap();
        let p = OdeProblem::new(grid, vec![0.0], move |_t, x: &[f64], out: &mut [f64]| {
            out[0] = -gamma * (x[0] - c)
        });
        let sol = rk4_integrate_recorded(&p).unwrap();
        for (i, t) in grid.times().enumerate() {
            assert!((sol.states.row(i)[0] - c * (1.0 - (-gamma * t).exp())).abs() < 1e-8);
            assert_relative_eq!(
                sol.derivatives.row(i)[0],
                -gamma * (sol.states.row(i)[0] - c),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn divergence_reports_first_bad_time() {
        let grid = make_grid(1.0, 0.1).unwrap();
        let p = OdeProblem::new(grid, vec![1.0], |t, _x: &[f64], out: &mut [f64]| {
            out[0] = if t > 0.45 { f64::INFINITY } else { 1.0 }
        });
        match rk4_integrate(&p) {
            Err(Error::Divergence { t }) => assert_relative_eq!(t, 0.5, epsilon = 1e-12),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn deterministic() {
        let grid = make_grid(3.0, 0.01).unwrap();
        let p = OdeProblem::new(grid, vec![0.2], |t, x: &[f64], out: &mut [f64]| {
            out[0] = (3.0 * t).sin() - x[0] * x[0]
        });
        assert_eq!(rk4_integrate(&p).unwrap(), rk4_integrate(&p).unwrap());
        assert_eq!(rk4_integrate(&p).unwrap().grid(), &grid);
    }

    #[test]
    fn recommended_steps() {
        assert_relative_eq!(recommended_dt(2.0 * PI, 100).unwrap(), 0.01, epsilon = 1e-15);
        assert_relative_eq!(recommended_dt(15.0, 64).unwrap(), 0.006545, epsilon = 1e-6);
        assert_relative_eq!(recommended_dt(7.0, 64).unwrap(), 0.014025, epsilon = 1e-6);
        assert!(recommended_dt(0.0, 64).is_err());
    }
}
