//! Integral-type iterative learning control with a forgetting factor.
//!
//! Each iteration `k` integrates
//!
//! ```text
//! ż_k = (1 - β) ż_{k-1} - Γ_k (z_k - x*),   z_k(0) = 0,
//! Γ_k = α γ_k G / 2,   γ_k = (1 - (1 - β)^k) / β,
//! ```
//!
//! where `G` is the gain matrix (the map's `Q` unless overridden). The
//! tracking error `y_k = z_k - x*` obeys `y_k = T_k(y_{k-1} - β/(1-β) x*)`
//! with the linear operator
//!
//! ```text
//! T_k(x)(t) = (1 - β) [x(t) - ∫₀ᵗ e^{-Γ_k (t-s)} Γ_k x(s) ds],
//! ```
//!
//! and the iterates approach the fixed point `y_∞ = T_∞(y_∞ - β/(1-β) x*)`
//! with `Γ_∞ = αG/(2β)`. With `β = 0` and a constant gain the error energy
//! `J_k = ∫ e^{-λt} ẏ_kᵀ ẏ_k dt` is non-increasing and `y_k → 0` in L₂.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rustfft::{num_complex::Complex, FftPlanner};

use crate::analysis::lambda0;
use crate::error::{invalid, Error, Result};
use crate::integrator::{rk4_integrate_recorded, OdeProblem};
use crate::plant::QuadraticMap;
use crate::trajectory::{lambda_norm, weighted_l2, TimeGrid, Trajectory};

/// Iteration index, with the limit `k → ∞` as a distinguished value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Iteration {
    Finite(usize),
    Limit,
}

impl std::fmt::Display for Iteration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Iteration::Finite(k) => write!(f, "{k}"),
            Iteration::Limit => f.write_str("inf"),
        }
    }
}

/// `γ_k = (1 - (1-β)^k) / β`.
pub fn gamma_k(beta: f64, k: usize) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(invalid(format!(
            "gamma_k needs beta in (0, 1], got {beta}; use the beta = 0 law instead"
        )));
    }
    if k == 0 {
        return Err(invalid("gamma_k is defined for k >= 1"));
    }
    if k <= 10_000 {
        // partial sums of the geometric series are exact for small k
        let carry = 1.0 - beta;
        return Ok((1..k).fold(1.0, |g, _| 1.0 + carry * g));
    }
    Ok((1.0 - (1.0 - beta).powi(k.min(i32::MAX as usize) as i32)) / beta)
}

/// `γ_k`, or `1/β` at the limit.
pub fn gamma_at(beta: f64, k: Iteration) -> Result<f64> {
    match k {
        Iteration::Finite(k) => gamma_k(beta, k),
        Iteration::Limit => {
            gamma_k(beta, 1)?;
            Ok(1.0 / beta)
        }
    }
}

/// Parameters of an ILC campaign.
#[derive(Debug, Clone)]
pub struct IlcParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub map: QuadraticMap,
    pub grid: TimeGrid,
    pub k_max: usize,
    gain_matrix: DMatrix<f64>,
    gain_delta: f64,
}

impl IlcParams {
    /// Uses the map's `Q` and `δ` as gain matrix and its lower bound.
    pub fn new(
        alpha: f64,
        beta: f64,
        lambda: f64,
        map: QuadraticMap,
        grid: TimeGrid,
        k_max: usize,
    ) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(invalid(format!("alpha must be positive, got {alpha}")));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(invalid(format!("beta must lie in [0, 1], got {beta}")));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(invalid(format!("lambda must be non-negative, got {lambda}")));
        }
        if k_max == 0 {
            return Err(invalid("k_max must be at least 1"));
        }
        let gain_matrix = map.q().clone();
        let gain_delta = map.delta();
        Ok(IlcParams {
            alpha,
            beta,
            lambda,
            map,
            grid,
            k_max,
            gain_matrix,
            gain_delta,
        })
    }

    /// Replaces the matrix `G` in `Γ_k = αγ_kG/2` (and its certified lower
    /// bound). The cost map itself is unchanged.
    pub fn with_gain_matrix(mut self, gain: DMatrix<f64>, delta: f64) -> Result<Self> {
        let n = self.map.dim();
        if gain.nrows() != n || gain.ncols() != n {
            return Err(invalid(format!("gain matrix must be {n}x{n}")));
        }
        check_spd(&gain, "gain matrix")?;
        let min_eig = SymmetricEigen::new(gain.clone()).eigenvalues.min();
        if !(delta > 0.0) || min_eig < delta * (1.0 - 1e-12) {
            return Err(invalid(format!(
                "gain matrix smallest eigenvalue {min_eig} is below delta = {delta}"
            )));
        }
        self.gain_matrix = gain;
        self.gain_delta = delta;
        Ok(self)
    }

    pub fn gain_matrix(&self) -> &DMatrix<f64> {
        &self.gain_matrix
    }

    pub fn gain_delta(&self) -> f64 {
        self.gain_delta
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    fn require_forgetting(&self) -> Result<()> {
        if self.beta == 0.0 {
            return Err(invalid(
                "beta = 0 has no iteration gain Gamma_k; use ilc_beta0_step with a constant gain",
            ));
        }
        Ok(())
    }

    fn require_contraction_beta(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(invalid(format!(
                "contraction-based analysis needs beta in (0, 1), got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// `Γ_k = α γ_k G / 2`; at the limit `Γ_∞ = αG/(2β)`.
pub fn big_gamma_k(params: &IlcParams, k: Iteration) -> Result<DMatrix<f64>> {
    params.require_forgetting()?;
    let g = gamma_at(params.beta, k)?;
    Ok(params.gain_matrix() * (params.alpha * g / 2.0))
}

fn check_spd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(invalid(format!("{what} must be square")));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(invalid(format!("{what} is not symmetric")));
            }
        }
    }
    if SymmetricEigen::new(m.clone()).eigenvalues.min() <= 0.0 {
        return Err(invalid(format!("{what} is not positive definite")));
    }
    Ok(())
}

/// The causal convolution `c(t) = ∫₀ᵗ e^{-Γ(t-s)} Γ g(s) ds` on a grid,
/// evaluated mode by mode in the eigenbasis of `Γ` with the trapezoidal rule.
#[derive(Debug, Clone)]
pub struct ExpConvolution {
    eigvecs: DMatrix<f64>,
    rates: Vec<f64>,
    decays: Vec<f64>,
    step: f64,
}

impl ExpConvolution {
    pub fn new(gain: &DMatrix<f64>, grid: &TimeGrid) -> Result<Self> {
        check_spd(gain, "convolution gain")?;
        let eig = SymmetricEigen::new(gain.clone());
        let h = grid.step();
        let rates: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let decays = rates.iter().map(|r| (-r * h).exp()).collect();
        Ok(ExpConvolution {
            eigvecs: eig.eigenvectors,
            rates,
            decays,
            step: h,
        })
    }

    pub fn apply(&self, g: &Trajectory) -> Result<Trajectory> {
        let n = self.rates.len();
        if g.dim() != n {
            return Err(invalid(format!(
                "convolution input has dimension {}, gain is {n}x{n}",
                g.dim()
            )));
        }
        if (g.grid().step() - self.step).abs() > 1e-15 * self.step {
            return Err(invalid("convolution input uses a different grid step"));
        }
        let nodes = g.grid().len();
        if n == 1 {
            // eigenvector is ±1; skip the basis change so results stay exact
            let (rate, decay) = (self.rates[0], self.decays[0]);
            let w = 0.5 * rate * self.step;
            let src = g.samples();
            let mut out = vec![0.0; nodes];
            for i in 1..nodes {
                out[i] = decay * out[i - 1] + w * (decay * src[i - 1] + src[i]);
            }
            return Trajectory::new(*g.grid(), 1, out);
        }
        let vt = self.eigvecs.transpose();
        let modal: Vec<DVector<f64>> = g
            .rows()
            .map(|r| &vt * DVector::from_column_slice(r))
            .collect();
        let mut acc = DVector::zeros(n);
        let mut out = Vec::with_capacity(nodes * n);
        out.extend(std::iter::repeat_n(0.0, n));
        for i in 1..nodes {
            for j in 0..n {
                let w = 0.5 * self.rates[j] * self.step;
                acc[j] = self.decays[j] * acc[j]
                    + w * (self.decays[j] * modal[i - 1][j] + modal[i][j]);
            }
            out.extend((&self.eigvecs * &acc).iter());
        }
        Trajectory::new(*g.grid(), n, out)
    }
}

/// One ILC iterate: `z_k` and the recorded right-hand side `ż_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct IlcState {
    pub k: usize,
    pub z: Trajectory,
    pub z_dot: Trajectory,
}

impl IlcState {
    /// The `k = 0` state with zero input and zero derivative.
    pub fn initial(grid: TimeGrid, dim: usize) -> Self {
        IlcState {
            k: 0,
            z: Trajectory::zeros(grid, dim),
            z_dot: Trajectory::zeros(grid, dim),
        }
    }

    /// Tracking error `y_k = z_k - x*`.
    pub fn error(&self, map: &QuadraticMap) -> Result<Trajectory> {
        self.z.checked_sub(&map.x_star_trajectory(*self.z.grid())?)
    }
}

fn check_state(prev: &IlcState, params: &IlcParams) -> Result<()> {
    if prev.z.grid() != &params.grid || prev.z_dot.grid() != &params.grid {
        return Err(invalid("state lives on a different grid than the parameters"));
    }
    if prev.z.dim() != params.dim() || prev.z_dot.dim() != params.dim() {
        return Err(invalid("state dimension does not match the map"));
    }
    Ok(())
}

/// Integrates `ż = c·ż_prev(t) - Γ(z - x*(t))` from `z(0) = 0`.
fn integrate_learning_law(
    prev_dot: &Trajectory,
    carry: f64,
    gain: &DMatrix<f64>,
    map: &QuadraticMap,
    grid: TimeGrid,
) -> Result<(Trajectory, Trajectory)> {
    let n = map.dim();
    let rhs = |t: f64, z: &[f64], out: &mut [f64]| {
        let xs = map.x_star_at(t);
        let ff = prev_dot.interp(t).expect("RK4 stages stay inside the horizon");
        for i in 0..n {
            let mut fb = 0.0;
            for j in 0..n {
                fb += gain[(i, j)] * (z[j] - xs[j]);
            }
            out[i] = carry * ff[i] - fb;
        }
    };
    let sol = rk4_integrate_recorded(&OdeProblem::new(grid, vec![0.0; n], rhs))?;
    Ok((sol.states, sol.derivatives))
}

/// Advances the forgetting-factor law by one iteration.
pub fn ilc_step(prev: &IlcState, params: &IlcParams) -> Result<IlcState> {
    check_state(prev, params)?;
    let k = prev.k + 1;
    let gain = big_gamma_k(params, Iteration::Finite(k))?;
    let (z, z_dot) = integrate_learning_law(
        &prev.z_dot,
        1.0 - params.beta,
        &gain,
        &params.map,
        params.grid,
    )?;
    Ok(IlcState { k, z, z_dot })
}

/// Quadrature form of one iteration:
/// `z_k = (1-β) x_prev + ∫₀ᵗ e^{-Γ_k(t-s)} Γ_k [x* - (1-β) x_prev] ds`.
///
/// Valid only for `x_prev(0) = 0`.
pub fn ilc_closed_form(x_prev: &Trajectory, params: &IlcParams, k: usize) -> Result<Trajectory> {
    if x_prev.grid() != &params.grid || x_prev.dim() != params.dim() {
        return Err(invalid("previous input does not match the parameter grid"));
    }
    if x_prev.row(0).iter().any(|v| v.abs() > 1e-9) {
        return Err(invalid("previous input must start at x(0) = 0"));
    }
    let gain = big_gamma_k(params, Iteration::Finite(k))?;
    let conv = ExpConvolution::new(&gain, &params.grid)?;
    let carry = 1.0 - params.beta;
    let x_star = params.map.x_star_trajectory(params.grid)?;
    let forcing = x_star.linear_combination(1.0, x_prev, -carry)?;
    conv.apply(&forcing)?.linear_combination(1.0, x_prev, carry)
}

/// `T_k(x) = (1-β)[x - ∫₀ᵗ e^{-Γ_k(t-s)} Γ_k x(s) ds]`.
pub fn apply_tk(x: &Trajectory, params: &IlcParams, k: Iteration) -> Result<Trajectory> {
    let conv = ExpConvolution::new(&big_gamma_k(params, k)?, &params.grid)?;
    apply_tk_with(x, params.beta, &conv)
}

fn apply_tk_with(x: &Trajectory, beta: f64, conv: &ExpConvolution) -> Result<Trajectory> {
    let carry = 1.0 - beta;
    x.linear_combination(carry, &conv.apply(x)?, -carry)
}

/// Result of [`fixed_point_y_inf`].
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub y: Trajectory,
    pub iterations: usize,
    /// `‖y - T_∞(y - β/(1-β) x*)‖_λ` at the returned `y`.
    pub residual: f64,
    /// Successive λ-norm changes, one per iteration.
    pub changes: Vec<f64>,
}

/// Solves `y = T_∞(y - β/(1-β) x*)` by Picard iteration from `y = 0`.
pub fn fixed_point_y_inf(params: &IlcParams, tol: f64, max_iters: usize) -> Result<FixedPoint> {
    params.require_contraction_beta()?;
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    let lam0 = lambda0(params.alpha, params.gain_delta, params.beta, params.dim())?;
    if params.lambda <= lam0 {
        return Err(Error::PreconditionViolation(format!(
            "lambda = {} does not exceed lambda0 = {lam0}",
            params.lambda
        )));
    }
    let conv = ExpConvolution::new(&big_gamma_k(params, Iteration::Limit)?, &params.grid)?;
    let shift = params
        .map
        .x_star_trajectory(params.grid)?
        .scale(params.beta / (1.0 - params.beta))?;
    let update = |y: &Trajectory| apply_tk_with(&y.checked_sub(&shift)?, params.beta, &conv);

    let mut y = Trajectory::zeros(params.grid, params.dim());
    let mut changes = Vec::new();
    for it in 1..=max_iters {
        let next = update(&y)?;
        let change = lambda_norm(&next.checked_sub(&y)?, params.lambda)?;
        changes.push(change);
        y = next;
        if change < tol {
            let residual = lambda_norm(&y.checked_sub(&update(&y)?)?, params.lambda)?;
            return Ok(FixedPoint {
                y,
                iterations: it,
                residual,
                changes,
            });
        }
    }
    Err(Error::ConvergenceFailure {
        iterations: max_iters,
        residual: changes.last().copied().unwrap_or(f64::NAN),
    })
}

/// One iteration of the `β = 0` law `ż_k = ż_{k-1} - Γ(z_k - x*)` with a
/// constant gain. Requires `x*(0) = 0`.
pub fn ilc_beta0_step(prev: &IlcState, gain: &DMatrix<f64>, params: &IlcParams) -> Result<IlcState> {
    check_state(prev, params)?;
    if gain.nrows() != params.dim() {
        return Err(invalid("gain dimension does not match the map"));
    }
    check_spd(gain, "gain")?;
    if params.map.x_star_at(0.0).iter().any(|v| v.abs() > 1e-12) {
        return Err(invalid("the beta = 0 law requires x*(0) = 0"));
    }
    let (z, z_dot) = integrate_learning_law(&prev.z_dot, 1.0, gain, &params.map, params.grid)?;
    Ok(IlcState {
        k: prev.k + 1,
        z,
        z_dot,
    })
}

/// `J_k = ∫₀ᴸ e^{-λt} ẏ_kᵀ ẏ_k dt` with `ẏ_k = ż_k - ẋ*`, trapezoidal.
pub fn j_index(state: &IlcState, lambda: f64, map: &QuadraticMap) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(invalid(format!("J index needs lambda > 0, got {lambda}")));
    }
    let xs_dot = map.x_star_derivative_trajectory(*state.z_dot.grid())?;
    let y_dot = state.z_dot.checked_sub(&xs_dot)?;
    Ok(weighted_l2(&y_dot, lambda)?.powi(2))
}

/// Fraction of signal energy per frequency band, low to high.
///
/// Diagnostic only; used to watch how the `β = 0` law leaves high-frequency
/// error content behind.
pub fn spectral_profile(y: &Trajectory, bands: usize) -> Result<Vec<f64>> {
    if bands == 0 {
        return Err(invalid("need at least one band"));
    }
    let len = y.grid().len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(len);
    let half = len / 2 + 1;
    let mut energy = vec![0.0; half];
    for j in 0..y.dim() {
        let mut buf: Vec<Complex<f64>> =
            y.component(j).into_iter().map(|v| Complex::new(v, 0.0)).collect();
        fft.process(&mut buf);
        for (e, c) in energy.iter_mut().zip(&buf) {
            *e += c.norm_sqr();
        }
    }
    let total: f64 = energy.iter().sum();
    let mut out = vec![0.0; bands];
    if total == 0.0 {
        return Ok(out);
    }
    for (i, e) in energy.iter().enumerate() {
        out[(i * bands / half).min(bands - 1)] += e / total;
    }
    Ok(out)
}

/// Which learning law a campaign runs.
#[derive(Debug, Clone)]
pub enum IlcLaw {
    /// `ż_k = (1-β) ż_{k-1} - Γ_k(z_k - x*)`.
    Forgetting,
    /// `ż_k = ż_{k-1} - Γ(z_k - x*)` with a constant gain.
    BetaZero { gain: DMatrix<f64> },
}

/// Which iterates a campaign keeps in memory.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Retain {
    #[default]
    None,
    All,
    Only(Vec<usize>),
}

impl Retain {
    pub fn keeps(&self, k: usize) -> bool {
        match self {
            Retain::None => false,
            Retain::All => true,
            Retain::Only(ks) => ks.contains(&k),
        }
    }
}

/// Per-iteration diagnostics of an ILC campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct IlcReport {
    pub k: usize,
    /// `γ_k`; absent for the `β = 0` law.
    pub gamma_k: Option<f64>,
    pub err_c: f64,
    pub err_lambda: f64,
    pub err_l2: f64,
    pub j_index: f64,
    /// `‖y_k - y_∞‖_λ` when a limit is known.
    pub fixed_point_gap: Option<f64>,
    /// `‖y_k - y_{k-1}‖_λ`.
    pub step_change: f64,
}

#[derive(Debug, Clone)]
pub struct IlcCampaign {
    pub reports: Vec<IlcReport>,
    pub y_inf: Option<FixedPoint>,
    pub retained: Vec<IlcState>,
    pub last: IlcState,
}

/// Fixed-point solver settings used by campaigns.
pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const FIXED_POINT_MAX_ITERS: usize = 10_000;

/// Runs `k_max` iterations of the chosen law from the zero state.
///
/// For the forgetting law with `β ∈ (0, 1)` and `λ > λ₀` the limit `y_∞`
/// is solved first and every report carries the gap to it. For `β = 0`
/// the limit is `y_∞ = 0`.
pub fn run_ilc_campaign(params: &IlcParams, law: &IlcLaw, retain: &Retain) -> Result<IlcCampaign> {
    let map = &params.map;
    let x_star = map.x_star_trajectory(params.grid)?;
    let y_inf = match law {
        IlcLaw::Forgetting if params.beta > 0.0 && params.beta < 1.0 => {
            let lam0 = lambda0(params.alpha, params.gain_delta, params.beta, params.dim())?;
            if params.lambda > lam0 {
                Some(fixed_point_y_inf(params, FIXED_POINT_TOL, FIXED_POINT_MAX_ITERS)?)
            } else {
                None
            }
        }
        _ => None,
    };
    let lambda = params.lambda;
    let mut state = IlcState::initial(params.grid, params.dim());
    let mut prev_error = Trajectory::zeros(params.grid, params.dim());
    let mut reports = Vec::with_capacity(params.k_max);
    let mut retained = Vec::new();
    for _ in 0..params.k_max {
        state = match law {
            IlcLaw::Forgetting => ilc_step(&state, params)?,
            IlcLaw::BetaZero { gain } => ilc_beta0_step(&state, gain, params)?,
        };
        let y = state.z.checked_sub(&x_star)?;
        let err_lambda = lambda_norm(&y, lambda)?;
        let fixed_point_gap = match (law, &y_inf) {
            (IlcLaw::BetaZero { .. }, _) => Some(err_lambda),
            (_, Some(fp)) => Some(lambda_norm(&y.checked_sub(&fp.y)?, lambda)?),
            _ => None,
        };
        reports.push(IlcReport {
            k: state.k,
            gamma_k: match law {
                IlcLaw::Forgetting => Some(gamma_k(params.beta, state.k)?),
                IlcLaw::BetaZero { .. } => None,
            },
            err_c: y.c_norm(),
            err_lambda,
            err_l2: weighted_l2(&y, lambda)?,
            j_index: j_index(&state, lambda, map)?,
            fixed_point_gap,
            step_change: lambda_norm(&y.checked_sub(&prev_error)?, lambda)?,
        });
        if retain.keeps(state.k) {
            retained.push(state.clone());
        }
        prev_error = y;
    }
    Ok(IlcCampaign {
        reports,
        y_inf,
        retained,
        last: state,
    })
}
