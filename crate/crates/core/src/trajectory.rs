//! Uniform time grids, sampled trajectories and the norms used to measure them.
//!
//! A [`Trajectory`] is a vector-valued function of time stored on the nodes
//! `t_i = i * dt`, `i = 0..=N`, of a [`TimeGrid`] covering `[0, L]`. Every
//! other module produces and consumes trajectories, and every convergence
//! statement in the crate is phrased in one of three norms:
//!
//! * the λ-norm `max_t e^{-λt} ‖f(t)‖_∞`,
//! * the C-norm `max_t ‖f(t)‖_∞` (the λ-norm at `λ = 0`),
//! * the exponentially weighted L₂ norm `sqrt(∫ e^{-λt} fᵀf dt)`.
//!
//! All norms are evaluated on grid nodes only.

use std::fmt::Write as _;
use std::io;

use crate::error::{invalid, Error, Result};

/// Upper bound on the number of grid intervals accepted by [`TimeGrid`].
pub const MAX_INTERVALS: usize = 1 << 28;

/// A uniform grid on `[0, L]` with `N` intervals of width `dt = L / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    step: f64,
    count: usize,
}

impl TimeGrid {
    /// Builds the grid with `N = round(L / dt)` intervals and adjusts the step
    /// so that `N * dt == L`.
    pub fn new(horizon: f64, step: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(invalid(format!("step must be positive, got {step}")));
        }
        if horizon / step < 2.0 {
            return Err(invalid(format!(
                "horizon {horizon} holds fewer than two steps of {step}"
            )));
        }
        let ratio = (horizon / step).round();
        if !ratio.is_finite() || ratio > MAX_INTERVALS as f64 {
            return Err(invalid(format!(
                "horizon / step = {ratio} exceeds the supported interval count"
            )));
        }
        Self::with_count(horizon, ratio as usize)
    }

    /// Builds the grid with exactly `count` intervals.
    pub fn with_count(horizon: f64, count: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        if count < 2 {
            return Err(invalid(format!("a grid needs at least 2 intervals, got {count}")));
        }
        if count > MAX_INTERVALS {
            return Err(invalid(format!("{count} intervals exceeds the supported maximum")));
        }
        Ok(TimeGrid {
            horizon,
            step: horizon / count as f64,
            count,
        })
    }

    /// Builds the coarsest grid whose step does not exceed `max_step`.
    pub fn with_max_step(horizon: f64, max_step: f64) -> Result<Self> {
        if !(max_step.is_finite() && max_step > 0.0) {
            return Err(invalid(format!("step must be positive, got {max_step}")));
        }
        let ratio = (horizon / max_step).ceil();
        if !ratio.is_finite() || ratio > MAX_INTERVALS as f64 {
            return Err(invalid(format!(
                "horizon / step = {ratio} exceeds the supported interval count"
            )));
        }
        let mut count = (ratio as usize).max(2);
        // ceil can land one short when the division rounds down
        while horizon / (count as f64) > max_step {
            count += 1;
        }
        Self::with_count(horizon, count)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of intervals `N`.
    pub fn count(&self) -> usize {
        self.count
    }

    /// Number of nodes, `N + 1`.
    pub fn len(&self) -> usize {
        self.count + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Time of node `i`. The last node is exactly `L`.
    pub fn time(&self, i: usize) -> f64 {
        if i == self.count {
            self.horizon
        } else {
            i as f64 * self.step
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.time(i))
    }

    /// Trapezoidal quadrature weight of node `i`.
    pub fn trapezoid_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.count {
            0.5 * self.step
        } else {
            self.step
        }
    }

    /// Returns the bracketing interval index and the fractional position in it.
    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        // RK4 stages can overshoot L by rounding; accept a few ulps
        let slack = 1e-12 * self.horizon;
        if !t.is_finite() || t < -slack || t > self.horizon + slack {
            return Err(Error::OutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let t = t.clamp(0.0, self.horizon);
        let pos = t / self.step;
        let node = pos.round();
        if (pos - node).abs() < 1e-9 {
            // snap so that node times reproduce stored samples exactly
            let node = node as usize;
            return Ok(if node >= self.count {
                (self.count - 1, 1.0)
            } else {
                (node, 0.0)
            });
        }
        let i = (pos.floor() as usize).min(self.count - 1);
        Ok((i, (pos - i as f64).clamp(0.0, 1.0)))
    }
}

/// Builds a uniform grid on `[0, horizon]` with approximately `step` spacing.
pub fn make_grid(horizon: f64, step: f64) -> Result<TimeGrid> {
    TimeGrid::new(horizon, step)
}

/// A vector-valued function of time sampled on a [`TimeGrid`].
///
/// Samples are stored row-major, one row of `dim` values per node. Values
/// are finite and never change after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    dim: usize,
    samples: Vec<f64>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, dim: usize, samples: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("trajectory dimension must be at least 1"));
        }
        if samples.len() != grid.len() * dim {
            return Err(invalid(format!(
                "expected {} samples ({} nodes x {dim}), got {}",
                grid.len() * dim,
                grid.len(),
                samples.len()
            )));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite sample at node {} component {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Trajectory { grid, dim, samples })
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        assert!(dim > 0, "trajectory dimension must be at least 1");
        Trajectory {
            grid,
            dim,
            samples: vec![0.0; grid.len() * dim],
        }
    }

    pub fn constant(grid: TimeGrid, value: &[f64]) -> Result<Self> {
        let samples = value
            .iter()
            .copied()
            .cycle()
            .take(grid.len() * value.len())
            .collect();
        Self::new(grid, value.len(), samples)
    }

    /// Samples `f(t, out)` at every node.
    pub fn from_fn(grid: TimeGrid, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Result<Self> {
        let mut samples = vec![0.0; grid.len() * dim.max(1)];
        if dim > 0 {
            for (i, row) in samples.chunks_exact_mut(dim).enumerate() {
                f(grid.time(i), row);
            }
        }
        Self::new(grid, dim, samples)
    }

    pub fn from_scalar_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(grid, 1, |t, out| out[0] = f(t))
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.dim)
    }

    /// Values of one component at every node.
    pub fn component(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    fn check_compatible(&self, other: &Trajectory) -> Result<()> {
        if self.grid != other.grid {
            return Err(invalid("trajectories live on different grids"));
        }
        if self.dim != other.dim {
            return Err(invalid(format!(
                "dimension mismatch: {} vs {}",
                self.dim, other.dim
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Trajectory, f: impl Fn(f64, f64) -> f64) -> Result<Trajectory> {
        self.check_compatible(other)?;
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Trajectory::new(self.grid, self.dim, samples)
    }

    pub fn checked_add(&self, other: &Trajectory) -> Result<Trajectory> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn checked_sub(&self, other: &Trajectory) -> Result<Trajectory> {
        self.zip_with(other, |a, b| a - b)
    }

    /// `a * self + b * other`.
    pub fn linear_combination(&self, a: f64, other: &Trajectory, b: f64) -> Result<Trajectory> {
        self.zip_with(other, |x, y| a * x + b * y)
    }

    pub fn scale(&self, a: f64) -> Result<Trajectory> {
        self.map(|v| a * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Trajectory> {
        Trajectory::new(self.grid, self.dim, self.samples.iter().map(|&v| f(v)).collect())
    }

    pub fn lambda_norm(&self, lambda: f64) -> Result<f64> {
        lambda_norm(self, lambda)
    }

    pub fn c_norm(&self) -> f64 {
        c_norm(self)
    }

    pub fn weighted_l2(&self, lambda: f64) -> Result<f64> {
        weighted_l2(self, lambda)
    }

    /// Linear interpolation at time `t`; exact at grid nodes.
    pub fn interp(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.interp_into(t, &mut out)?;
        Ok(out)
    }

    pub fn interp_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let (i, frac) = self.grid.locate(t)?;
        let lo = self.row(i);
        let hi = self.row(i + 1);
        for ((o, &a), &b) in out.iter_mut().zip(lo).zip(hi) {
            *o = if frac == 0.0 {
                a
            } else if frac == 1.0 {
                b
            } else {
                a + frac * (b - a)
            };
        }
        Ok(())
    }

    /// Interpolated value of component `j` at time `t`.
    pub fn interp_component(&self, t: f64, j: usize) -> Result<f64> {
        let (i, frac) = self.grid.locate(t)?;
        let a = self.samples[i * self.dim + j];
        let b = self.samples[(i + 1) * self.dim + j];
        Ok(if frac == 0.0 {
            a
        } else if frac == 1.0 {
            b
        } else {
            a + frac * (b - a)
        })
    }

    /// Derivative estimate on the same grid.
    ///
    /// Central differences in the interior, second-order one-sided formulas at
    /// both ends.
    pub fn finite_diff(&self) -> Trajectory {
        let n = self.dim;
        let last = self.grid.count;
        let h = self.grid.step;
        let mut out = vec![0.0; self.samples.len()];
        for j in 0..n {
            let v = |i: usize| self.samples[i * n + j];
            out[j] = (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * h);
            for i in 1..last {
                out[i * n + j] = (v(i + 1) - v(i - 1)) / (2.0 * h);
            }
            out[last * n + j] = (3.0 * v(last) - 4.0 * v(last - 1) + v(last - 2)) / (2.0 * h);
        }
        Trajectory {
            grid: self.grid,
            dim: n,
            samples: out,
        }
    }

    /// CSV with header `t,x_1,...,x_n`, 17 significant digits, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.samples.len() * 26 + 32);
        s.push('t');
        for j in 1..=self.dim {
            let _ = write!(s, ",x_{j}");
        }
        s.push('\n');
        for (i, row) in self.rows().enumerate() {
            let _ = write!(s, "{}", format_f64(self.grid.time(i)));
            for v in row {
                let _ = write!(s, ",{}", format_f64(*v));
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }

    /// Parses the CSV produced by [`Trajectory::to_csv`]. The time column must
    /// describe a uniform grid starting at zero.
    pub fn from_csv(text: &str) -> Result<Trajectory> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| invalid("empty CSV"))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"t") || cols.len() < 2 {
            return Err(invalid("CSV header must start with `t` and name at least one component"));
        }
        for (j, c) in cols.iter().enumerate().skip(1) {
            if *c != format!("x_{j}") {
                return Err(invalid(format!("unexpected column name `{c}`")));
            }
        }
        let dim = cols.len() - 1;
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(invalid(format!(
                    "line {}: expected {} fields, got {}",
                    lineno + 2,
                    dim + 1,
                    fields.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| invalid(format!("line {}: bad number `{s}`", lineno + 2)))
            };
            times.push(parse(fields[0])?);
            for f in &fields[1..] {
                samples.push(parse(f)?);
            }
        }
        if times.len() < 3 {
            return Err(invalid("CSV must contain at least 3 rows"));
        }
        if times[0] != 0.0 {
            return Err(invalid("time column must start at 0"));
        }
        let grid = TimeGrid::with_count(*times.last().unwrap(), times.len() - 1)?;
        for (i, &t) in times.iter().enumerate() {
            if (t - grid.time(i)).abs() > 1e-9 * grid.horizon().max(1.0) {
                return Err(invalid(format!("time column is not uniform at row {}", i + 2)));
            }
        }
        Trajectory::new(grid, dim, samples)
    }
}

/// Formats with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Which norm to measure a trajectory in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    Lambda(f64),
    CNorm,
    WeightedL2(f64),
}

impl NormKind {
    pub fn evaluate(&self, f: &Trajectory) -> Result<f64> {
        match *self {
            NormKind::Lambda(lambda) => lambda_norm(f, lambda),
            NormKind::CNorm => Ok(c_norm(f)),
            NormKind::WeightedL2(lambda) => weighted_l2(f, lambda),
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    Ok(())
}

fn row_inf_norm(row: &[f64]) -> f64 {
    row.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `max_i e^{-λ t_i} ‖f(t_i)‖_∞`.
pub fn lambda_norm(f: &Trajectory, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if lambda == 0.0 {
        return Ok(c_norm(f));
    }
    let grid = f.grid;
    Ok(f.rows()
        .enumerate()
        .map(|(i, r)| (-lambda * grid.time(i)).exp() * row_inf_norm(r))
        .fold(0.0, f64::max))
}

/// `max_i ‖f(t_i)‖_∞`.
pub fn c_norm(f: &Trajectory) -> f64 {
    f.rows().map(row_inf_norm).fold(0.0, f64::max)
}

/// `sqrt(∫ e^{-λt} fᵀf dt)` by the composite trapezoidal rule.
pub fn weighted_l2(f: &Trajectory, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let grid = f.grid;
    let sum: f64 = f
        .rows()
        .enumerate()
        .map(|(i, r)| {
            let sq: f64 = r.iter().map(|v| v * v).sum();
            grid.trapezoid_weight(i) * (-lambda * grid.time(i)).exp() * sq
        })
        .sum();
    Ok(sum.sqrt())
}
