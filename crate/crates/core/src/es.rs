//! Dithered extremum seeking with iteration memory, and its modified Lie
//! bracket approximation.
//!
//! Iteration `k` of the original system integrates
//!
//! ```text
//! ẋ_k = (1-β) ẋ_{k-1}(t) - α F(x_k, t) √ω sin(ωt) + √ω cos(ωt),   x_k(0) = 0,
//! ```
//!
//! and the approximating (MLB) system integrates
//!
//! ```text
//! ż_k = (1-β) ẋ_{k-1}(t) - (α γ_k / 2) ∇F(z_k, t),   z_k(0) = 0.
//! ```
//!
//! Unrolling the first recursion gives
//! `ẋ_{k-1} = -α S_{k-1}(t) √ω sin(ωt) + γ_{k-1} √ω cos(ωt)` with the
//! accumulated feedback `S_k = (1-β) S_{k-1} + F(x_k(·), ·)`, so
//! [`IlesMemory`] stores only `S_k` on the grid instead of every past input.
//!
//! Only scalar inputs (`n = 1`) are supported: a single dither pair has no
//! agreed extension to several dimensions.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::ilc::{gamma_k, IlcParams, Retain};
use crate::integrator::{recommended_dt, rk4_integrate, OdeProblem};
use crate::plant::QuadraticMap;
use crate::trajectory::{c_norm, lambda_norm, TimeGrid, Trajectory};

/// Tunables of one ILES campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct IlesConfig {
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
    pub k_max: usize,
    pub steps_per_dither_period: usize,
    pub lambda: f64,
    /// Largest step the caller asked for; the grid may be finer.
    pub max_dt: f64,
    grid: TimeGrid,
}

impl IlesConfig {
    /// The grid step is `min(max_dt, (2π/ω) / steps_per_dither_period)`,
    /// rounded down so that it divides the horizon.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alpha: f64,
        beta: f64,
        omega: f64,
        horizon: f64,
        max_dt: f64,
        k_max: usize,
        steps_per_dither_period: usize,
        lambda: f64,
    ) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(invalid("alpha must be finite"));
        }
        if alpha == 0.0 {
            // allowed: the pure dither, no feedback
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(invalid(format!("beta must lie in (0, 1], got {beta}")));
        }
        if k_max == 0 {
            return Err(invalid("k_max must be at least 1"));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(invalid(format!("lambda must be non-negative, got {lambda}")));
        }
        let dt = recommended_dt(omega, steps_per_dither_period)?.min(max_dt);
        let grid = TimeGrid::with_max_step(horizon, dt)?;
        Ok(IlesConfig {
            alpha,
            beta,
            omega,
            k_max,
            steps_per_dither_period,
            lambda,
            max_dt,
            grid,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Same settings at another dither frequency (the grid is recomputed).
    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        IlesConfig::new(
            self.alpha,
            self.beta,
            omega,
            self.grid.horizon(),
            self.max_dt,
            self.k_max,
            self.steps_per_dither_period,
            self.lambda,
        )
    }

    pub fn with_k_max(&self, k_max: usize) -> Result<Self> {
        let mut c = self.clone();
        if k_max == 0 {
            return Err(invalid("k_max must be at least 1"));
        }
        c.k_max = k_max;
        Ok(c)
    }

    pub fn dither_period(&self) -> f64 {
        2.0 * PI / self.omega
    }
}

/// The ILC parameters whose `k`-th iterate coincides with the MLB system
/// driven by a memory-free input.
///
/// `∇F = 2Q(x - x*)` makes the MLB feedback `-(αγ_k/2)·2Q(z - x*)`, so the
/// equivalent gain matrix is the Hessian `2Q` with lower bound `2δ`.
pub fn equivalent_ilc_params(map: &QuadraticMap, cfg: &IlesConfig) -> Result<IlcParams> {
    if !(cfg.alpha > 0.0) {
        return Err(invalid("the ILC counterpart needs alpha > 0"));
    }
    let hessian: DMatrix<f64> = map.q() * 2.0;
    IlcParams::new(cfg.alpha, cfg.beta, cfg.lambda, map.clone(), cfg.grid, cfg.k_max)?
        .with_gain_matrix(hessian, 2.0 * map.delta())
}

fn require_scalar(map: &QuadraticMap) -> Result<()> {
    if map.dim() != 1 {
        return Err(invalid(format!(
            "dithered simulation supports scalar inputs only, map has dimension {}",
            map.dim()
        )));
    }
    Ok(())
}

/// The ILES memory after iteration `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct IlesMemory {
    pub k: usize,
    /// `γ_k`, with `γ_0 = 0`.
    pub gamma: f64,
    /// `S_k(t) = Σ_{i ≤ k} (1-β)^{k-i} F(x_i(t), t)` on the grid.
    pub feedback_accum: Trajectory,
    /// The last input `x_k`.
    pub x_prev: Trajectory,
}

impl IlesMemory {
    /// Reset memory: `S_0 ≡ 0`, `x_0 ≡ 0`.
    pub fn initial(grid: TimeGrid) -> Self {
        IlesMemory {
            k: 0,
            gamma: 0.0,
            feedback_accum: Trajectory::zeros(grid, 1),
            x_prev: Trajectory::zeros(grid, 1),
        }
    }

    fn check(&self, cfg: &IlesConfig) -> Result<()> {
        if self.feedback_accum.grid() != cfg.grid() || self.x_prev.grid() != cfg.grid() {
            return Err(invalid("memory lives on a different grid than the config"));
        }
        Ok(())
    }

    /// `ẋ_k(t)` rebuilt from the stored feedback.
    pub fn derivative_at(&self, t: f64, alpha: f64, omega: f64) -> f64 {
        if self.k == 0 {
            return 0.0;
        }
        let s = self
            .feedback_accum
            .interp_component(t, 0)
            .expect("RK4 stages stay inside the horizon");
        let sw = omega.sqrt();
        -alpha * s * sw * (omega * t).sin() + self.gamma * sw * (omega * t).cos()
    }

    /// `ẋ_k` rebuilt on every grid node.
    pub fn derivative_trajectory(&self, alpha: f64, omega: f64) -> Result<Trajectory> {
        let grid = *self.feedback_accum.grid();
        Trajectory::from_scalar_fn(grid, |t| self.derivative_at(t, alpha, omega))
    }

    /// Folds the new input `x_k` into the memory.
    pub fn advance(&self, x_k: &Trajectory, map: &QuadraticMap, beta: f64) -> Result<IlesMemory> {
        let grid = *self.feedback_accum.grid();
        if x_k.grid() != &grid || x_k.dim() != 1 {
            return Err(invalid("input does not match the memory grid"));
        }
        let carry = 1.0 - beta;
        let mut s = Vec::with_capacity(grid.len());
        for (i, (prev, x)) in self
            .feedback_accum
            .samples()
            .iter()
            .zip(x_k.samples())
            .enumerate()
        {
            s.push(carry * prev + map.eval(&[*x], grid.time(i))?);
        }
        let k = self.k + 1;
        Ok(IlesMemory {
            k,
            gamma: gamma_k(beta, k)?,
            feedback_accum: Trajectory::new(grid, 1, s)?,
            x_prev: x_k.clone(),
        })
    }
}

fn es_feedback(map: &QuadraticMap, alpha: f64, omega: f64, t: f64, x: f64) -> f64 {
    let sw = omega.sqrt();
    let f = map.eval(&[x], t).expect("scalar map");
    -alpha * f * sw * (omega * t).sin() + sw * (omega * t).cos()
}

/// Classical extremum seeking `ẋ = -αF√ω sin(ωt) + √ω cos(ωt)`, `x(0) = 0`.
pub fn classic_es(map: &QuadraticMap, cfg: &IlesConfig) -> Result<Trajectory> {
    require_scalar(map)?;
    let (alpha, omega) = (cfg.alpha, cfg.omega);
    let rhs = |t: f64, x: &[f64], out: &mut [f64]| {
        out[0] = es_feedback(map, alpha, omega, t, x[0]);
    };
    rk4_integrate(&OdeProblem::new(cfg.grid, vec![0.0], rhs))
}

/// One ILES iteration. Returns `x_k` and the memory advanced to `k`.
pub fn iles_step(
    mem: &IlesMemory,
    map: &QuadraticMap,
    cfg: &IlesConfig,
) -> Result<(Trajectory, IlesMemory)> {
    require_scalar(map)?;
    mem.check(cfg)?;
    let (alpha, omega) = (cfg.alpha, cfg.omega);
    let carry = 1.0 - cfg.beta;
    let rhs = |t: f64, x: &[f64], out: &mut [f64]| {
        let es = es_feedback(map, alpha, omega, t, x[0]);
        out[0] = es + carry * mem.derivative_at(t, alpha, omega);
    };
    let x = rk4_integrate(&OdeProblem::new(cfg.grid, vec![0.0], rhs))?;
    let next = mem.advance(&x, map, cfg.beta)?;
    Ok((x, next))
}

/// The MLB iterate `z_k`, driven by the original system's `ẋ_{k-1}` held
/// in `mem` (which must be the memory after iteration `k - 1`).
pub fn mlb_step(mem: &IlesMemory, map: &QuadraticMap, cfg: &IlesConfig) -> Result<Trajectory> {
    require_scalar(map)?;
    mem.check(cfg)?;
    let (alpha, omega) = (cfg.alpha, cfg.omega);
    let carry = 1.0 - cfg.beta;
    let gain = alpha * gamma_k(cfg.beta, mem.k + 1)? / 2.0;
    let rhs = |t: f64, z: &[f64], out: &mut [f64]| {
        let g = map.grad(z, t).expect("scalar map")[0];
        out[0] = carry * mem.derivative_at(t, alpha, omega) - gain * g;
    };
    rk4_integrate(&OdeProblem::new(cfg.grid, vec![0.0], rhs))
}

/// `‖x_k - z_k‖_λ`.
pub fn disturbance_norm(x_k: &Trajectory, z_k: &Trajectory, lambda: f64) -> Result<f64> {
    lambda_norm(&x_k.checked_sub(z_k)?, lambda)
}

/// Per-iteration diagnostics of an ILES campaign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationReport {
    pub k: usize,
    /// `‖x_k - x*‖_C`
    pub err_c: f64,
    /// `‖x_k - x*‖_λ`
    pub err_lambda: f64,
    /// `‖z_k - x*‖_λ`
    pub mlb_err_lambda: f64,
    /// `‖x_k - z_k‖_λ`
    pub disturbance_lambda: f64,
    /// `‖x_k - z_k‖_C`
    pub disturbance_c: f64,
}

/// Stored trajectories of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RetainedIterate {
    pub k: usize,
    pub x: Trajectory,
    pub z: Trajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlesCampaign {
    pub config: IlesConfig,
    pub reports: Vec<IterationReport>,
    pub retained: Vec<RetainedIterate>,
}

impl IlesCampaign {
    pub fn max_disturbance_lambda(&self) -> f64 {
        self.reports.iter().map(|r| r.disturbance_lambda).fold(0.0, f64::max)
    }

    pub fn max_disturbance_c(&self) -> f64 {
        self.reports.iter().map(|r| r.disturbance_c).fold(0.0, f64::max)
    }

    pub fn max_err_c(&self) -> f64 {
        self.reports.iter().map(|r| r.err_c).fold(0.0, f64::max)
    }

    pub fn max_mlb_err_lambda(&self) -> f64 {
        self.reports.iter().map(|r| r.mlb_err_lambda).fold(0.0, f64::max)
    }

    pub fn retained_iterate(&self, k: usize) -> Option<&RetainedIterate> {
        self.retained.iter().find(|r| r.k == k)
    }
}

/// A campaign that stopped early, with everything computed before the failure.
#[derive(Debug, Clone, thiserror::Error)]
#[error("campaign failed at iteration {k}: {source}")]
pub struct CampaignError {
    pub k: usize,
    #[source]
    pub source: Error,
    pub partial: Box<IlesCampaign>,
}

/// Runs `iles_step` and `mlb_step` in lockstep from the shared memory for
/// `k = 1..=k_max`.
pub fn run_campaign(
    map: &QuadraticMap,
    cfg: &IlesConfig,
    retain: &Retain,
) -> std::result::Result<IlesCampaign, CampaignError> {
    let mut campaign = IlesCampaign {
        config: cfg.clone(),
        reports: Vec::with_capacity(cfg.k_max),
        retained: Vec::new(),
    };
    let fail = |k: usize, source: Error, partial: &IlesCampaign| CampaignError {
        k,
        source,
        partial: Box::new(partial.clone()),
    };
    let x_star = match map.x_star_trajectory(cfg.grid) {
        Ok(x) => x,
        Err(e) => return Err(fail(0, e, &campaign)),
    };
    let mut mem = IlesMemory::initial(cfg.grid);
    for k in 1..=cfg.k_max {
        let step = || -> Result<(IterationReport, Trajectory, Trajectory, IlesMemory)> {
            let z = mlb_step(&mem, map, cfg)?;
            let (x, next) = iles_step(&mem, map, cfg)?;
            let ex = x.checked_sub(&x_star)?;
            let ez = z.checked_sub(&x_star)?;
            let d = x.checked_sub(&z)?;
            let report = IterationReport {
                k,
                err_c: c_norm(&ex),
                err_lambda: lambda_norm(&ex, cfg.lambda)?,
                mlb_err_lambda: lambda_norm(&ez, cfg.lambda)?,
                disturbance_lambda: lambda_norm(&d, cfg.lambda)?,
                disturbance_c: c_norm(&d),
            };
            Ok((report, x, z, next))
        };
        match step() {
            Ok((report, x, z, next)) => {
                campaign.reports.push(report);
                if retain.keeps(k) {
                    campaign.retained.push(RetainedIterate { k, x, z });
                }
                mem = next;
            }
            Err(e) => return Err(fail(k, e, &campaign)),
        }
    }
    Ok(campaign)
}
