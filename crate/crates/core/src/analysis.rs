//! Contraction constants, bound formulas and empirical checks.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::ilc::{apply_tk, ilc_step, IlcParams, IlcState, Iteration};
use crate::es::{equivalent_ilc_params, run_campaign, IlesCampaign, IlesConfig};
use crate::ilc::Retain;
use crate::plant::QuadraticMap;
use crate::trajectory::{lambda_norm, Trajectory};

/// Number of Fourier modes in the random test trajectories.
pub const CONTRACTION_MODES: usize = 8;

fn require_open_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid(format!("beta must lie in (0, 1), got {beta}")));
    }
    Ok(())
}

/// `λ₀ = max{0, αδ(√n(1-β) - β) / (2β)}`.
pub fn lambda0(alpha: f64, delta: f64, beta: f64, n: usize) -> Result<f64> {
    require_open_beta(beta)?;
    if n == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    let sn = (n as f64).sqrt();
    Ok((alpha * delta * (sn * (1.0 - beta) - beta) / (2.0 * beta)).max(0.0))
}

/// `ρ = (1-β)(1 + √n αδ / (αδ + 2λ))`.
pub fn rho(alpha: f64, delta: f64, beta: f64, n: usize, lambda: f64) -> f64 {
    let ad = alpha * delta;
    (1.0 - beta) * (1.0 + (n as f64).sqrt() * ad / (ad + 2.0 * lambda))
}

/// The contraction constant of `T_k` in the λ-norm and the weight
/// threshold above which it is below one.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ContractionParams {
    pub alpha: f64,
    pub delta: f64,
    pub beta: f64,
    pub n: usize,
    pub lambda: f64,
    pub rho: f64,
    pub lambda0: f64,
}

impl ContractionParams {
    pub fn contracts(&self) -> bool {
        self.rho < 1.0
    }
}

pub fn contraction_params(
    alpha: f64,
    delta: f64,
    beta: f64,
    n: usize,
    lambda: f64,
) -> Result<ContractionParams> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(invalid(format!("delta must be positive, got {delta}")));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    Ok(ContractionParams {
        alpha,
        delta,
        beta,
        n,
        lambda,
        rho: rho(alpha, delta, beta, n, lambda),
        lambda0: lambda0(alpha, delta, beta, n)?,
    })
}

/// [`contraction_params`] for the gain matrix and weight of `params`.
pub fn contraction_params_for(params: &IlcParams) -> Result<ContractionParams> {
    contraction_params(
        params.alpha,
        params.gain_delta(),
        params.beta,
        params.dim(),
        params.lambda,
    )
}

/// Whether the unweighted (`λ = 0`) sup-norm argument can contract:
/// `β > 2 - √2`.
pub fn c_norm_feasibility(beta: f64) -> bool {
    beta > 2.0 - 2f64.sqrt()
}

/// Smallest `β` with `ρ(λ = 0) = (1-β)(1+√n) < 1`, i.e. `√n / (1+√n)`.
pub fn c_norm_threshold(n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    sn / (1.0 + sn)
}

/// Bound constants on the tracking errors.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct BoundSet {
    /// `‖y₁‖_λ`
    pub d0: f64,
    /// `βρ‖x*‖_λ / ((1-β)(1-ρ))`
    pub dstar_ilc: f64,
    /// `ρ(D₁ + β‖x*‖_λ/(1-β)) / (1-ρ)`, when `D₁` is known.
    pub dstar_iles: Option<f64>,
    /// Measured disturbance bound.
    pub d1: Option<f64>,
    /// `max(D₀, D*)` using the ILES constant when `D₁` is known.
    pub d2: f64,
    /// `ρD₁ / (1-ρ)`, when `D₁` is known.
    pub dy: Option<f64>,
}

/// Evaluates the bound formulas; `D₀` comes from one ILC iteration.
pub fn bounds(
    params: &IlcParams,
    rho: f64,
    x_star_lambda_norm: f64,
    d1: Option<f64>,
) -> Result<BoundSet> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(invalid(format!("rho must lie in (0, 1), got {rho}")));
    }
    require_open_beta(params.beta)?;
    if !(x_star_lambda_norm >= 0.0) {
        return Err(invalid("reference norm must be non-negative"));
    }
    if let Some(d) = d1 {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(invalid(format!("D1 must be non-negative, got {d}")));
        }
    }
    let y1 = ilc_step(&IlcState::initial(params.grid, params.dim()), params)?.error(&params.map)?;
    let d0 = lambda_norm(&y1, params.lambda)?;
    Ok(bounds_from(params.beta, rho, x_star_lambda_norm, d0, d1))
}

/// The formulas of [`bounds`] with `D₀` supplied.
pub fn bounds_from(beta: f64, rho: f64, x_star_lambda_norm: f64, d0: f64, d1: Option<f64>) -> BoundSet {
    let shift = beta * x_star_lambda_norm / (1.0 - beta);
    let dstar_ilc = rho * shift / (1.0 - rho);
    let dstar_iles = d1.map(|d| rho * (d + shift) / (1.0 - rho));
    BoundSet {
        d0,
        dstar_ilc,
        dstar_iles,
        d1,
        d2: d0.max(dstar_iles.unwrap_or(dstar_ilc)),
        dy: d1.map(|d| bound_dy(rho, d)),
    }
}

/// `D_y = ρD₁ / (1-ρ)`.
pub fn bound_dy(rho: f64, d1: f64) -> f64 {
    rho * d1 / (1.0 - rho)
}

fn random_fourier(params: &IlcParams, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
    let n = params.dim();
    let horizon = params.grid.horizon();
    let coeffs: Vec<[f64; 3]> = (0..n * CONTRACTION_MODES)
        .map(|_| {
            [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.0..1.0),
            ]
        })
        .collect();
    Trajectory::from_fn(params.grid, n, |t, out| {
        for (j, o) in out.iter_mut().enumerate() {
            let mut v = 0.0;
            for m in 0..CONTRACTION_MODES {
                let [a, b, _] = coeffs[j * CONTRACTION_MODES + m];
                let w = PI * (m as f64 + 1.0) / horizon;
                v += a * (w * t).sin() + b * (w * t).cos();
            }
            // the constant offset lets pairs differ at t = 0
            *o = v + coeffs[j * CONTRACTION_MODES][2];
        }
    })
}

/// Worst observed contraction ratio for one `k`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KRatio {
    #[serde(serialize_with = "serialize_iteration")]
    pub k: Iteration,
    pub max_ratio: f64,
    pub pairs: usize,
    pub passed: bool,
}

fn serialize_iteration<S: serde::Serializer>(k: &Iteration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&k.to_string())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ContractionReport {
    pub params: ContractionParams,
    pub trials: usize,
    pub seed: u64,
    pub per_k: Vec<KRatio>,
    pub skipped: usize,
}

impl ContractionReport {
    pub fn passed(&self) -> bool {
        self.per_k.iter().all(|r| r.passed)
    }
}

/// Measures `‖T_k(x) - T_k(y)‖_λ / ‖x - y‖_λ` over seeded random pairs.
pub fn verify_contraction(
    params: &IlcParams,
    ks: &[Iteration],
    trials: usize,
    seed: u64,
) -> Result<ContractionReport> {
    let cp = contraction_params_for(params)?;
    if params.lambda <= cp.lambda0 {
        return Err(Error::PreconditionViolation(format!(
            "lambda = {} does not exceed lambda0 = {}",
            params.lambda, cp.lambda0
        )));
    }
    if ks.is_empty() || trials == 0 {
        return Err(invalid("need at least one k and one trial"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(trials);
    let mut skipped = 0;
    for _ in 0..trials {
        let x = random_fourier(params, &mut rng)?;
        let y = random_fourier(params, &mut rng)?;
        let denom = lambda_norm(&x.checked_sub(&y)?, params.lambda)?;
        if denom == 0.0 {
            skipped += 1;
        } else {
            pairs.push((x, y, denom));
        }
    }
    let per_k = ks
        .iter()
        .map(|&k| {
            let ratios = pairs
                .par_iter()
                .map(|(x, y, denom)| {
                    let d = apply_tk(x, params, k)?.checked_sub(&apply_tk(y, params, k)?)?;
                    Ok(lambda_norm(&d, params.lambda)? / denom)
                })
                .collect::<Result<Vec<f64>>>()?;
            let max_ratio = ratios.into_iter().fold(0.0, f64::max);
            Ok(KRatio {
                k,
                max_ratio,
                pairs: pairs.len(),
                passed: max_ratio <= cp.rho,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ContractionReport {
        params: cp,
        trials,
        seed,
        per_k,
        skipped,
    })
}

/// Least-squares line through `(ln x, ln y)`; returns `(slope, intercept)`.
pub fn log_log_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(invalid("fit needs equally many abscissae and ordinates"));
    }
    if xs.len() < 2 {
        return Err(invalid("fit needs at least two points"));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(invalid("log-log fit needs positive finite data"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("fit needs at least two distinct abscissae"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ScalingPoint {
    pub omega: f64,
    /// `max_k ‖x_k - z_k‖_C`
    pub disturbance_c: f64,
    pub disturbance_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ScalingStudy {
    pub slope: f64,
    pub intercept: f64,
    pub k_probe: usize,
    pub points: Vec<ScalingPoint>,
}

/// An ω-sweep that stopped on a failed campaign.
#[derive(Debug, Clone, thiserror::Error)]
#[error("scaling study failed at omega = {omega}: {source}")]
pub struct StudyError {
    pub omega: f64,
    #[source]
    pub source: Error,
    /// Points of the frequencies that finished, in ω order.
    pub partial: Vec<ScalingPoint>,
}

fn study_input_error(msg: &str) -> StudyError {
    StudyError {
        omega: f64::NAN,
        source: invalid(msg),
        partial: Vec::new(),
    }
}

/// Runs a `k_probe`-iteration campaign per ω and fits
/// `ln max_k ‖x_k - z_k‖_C` against `ln ω`.
///
/// Campaigns run on up to `threads` workers (all cores when `None`);
/// results are merged in ω order so the fit does not depend on scheduling.
pub fn omega_scaling_study(
    map: &QuadraticMap,
    base: &IlesConfig,
    omegas: &[f64],
    k_probe: usize,
    threads: Option<usize>,
) -> std::result::Result<ScalingStudy, StudyError> {
    if omegas.len() < 4 {
        return Err(study_input_error("scaling study needs at least four frequencies"));
    }
    if omegas.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(study_input_error("frequencies must be positive"));
    }
    if omegas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(study_input_error("frequencies must be strictly increasing"));
    }
    let run_one = |omega: f64| -> Result<ScalingPoint> {
        let cfg = base.with_omega(omega)?.with_k_max(k_probe)?;
        let camp = run_campaign(map, &cfg, &Retain::None).map_err(|e| e.source)?;
        Ok(ScalingPoint {
            omega,
            disturbance_c: camp.max_disturbance_c(),
            disturbance_lambda: camp.max_disturbance_lambda(),
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| study_input_error(&format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<ScalingPoint>> =
        pool.install(|| omegas.par_iter().map(|&w| run_one(w)).collect());
    let mut points = Vec::with_capacity(omegas.len());
    for (omega, r) in omegas.iter().zip(results) {
        match r {
            Ok(p) => points.push(p),
            Err(source) => {
                return Err(StudyError {
                    omega: *omega,
                    source,
                    partial: points,
                })
            }
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.omega).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.disturbance_c).collect();
    let (slope, intercept) = log_log_fit(&xs, &ys).map_err(|source| StudyError {
        omega: f64::NAN,
        source,
        partial: points.clone(),
    })?;
    Ok(ScalingStudy {
        slope,
        intercept,
        k_probe,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BallCheck {
    pub passed: bool,
    pub dy: f64,
    pub slack: f64,
    /// `(k, ‖y_k - y_∞‖_λ)` for the checked tail.
    pub gaps: Vec<(usize, f64)>,
    /// `max_k ‖y_k - y_∞‖_λ - D_y(1 + slack)`; negative when inside.
    pub max_excess: f64,
}

/// Checks that the last `tail` MLB errors `y_k = z_k - x*` lie within
/// `D_y(1 + slack)` of `y_∞` in the λ-norm.
///
/// Every tail iterate must have been retained by the campaign.
pub fn ball_convergence_check(
    campaign: &IlesCampaign,
    x_star: &Trajectory,
    y_inf: &Trajectory,
    dy: f64,
    tail: usize,
    slack: f64,
) -> Result<BallCheck> {
    let k_last = campaign.reports.len();
    if tail == 0 || tail > k_last {
        return Err(invalid(format!(
            "tail of {tail} iterations does not fit a campaign of {k_last}"
        )));
    }
    if !(dy >= 0.0 && slack >= 0.0) {
        return Err(invalid("ball radius and slack must be non-negative"));
    }
    let lambda = campaign.config.lambda;
    let radius = dy * (1.0 + slack);
    let mut gaps = Vec::with_capacity(tail);
    for k in (k_last - tail + 1)..=k_last {
        let it = campaign
            .retained_iterate(k)
            .ok_or_else(|| invalid(format!("iteration {k} was not retained")))?;
        let y = it.z.checked_sub(x_star)?;
        gaps.push((k, lambda_norm(&y.checked_sub(y_inf)?, lambda)?));
    }
    let max_excess = gaps
        .iter()
        .map(|(_, g)| g - radius)
        .fold(f64::NEG_INFINITY, f64::max);
    // a zero radius admits only exact agreement
    let passed = gaps.iter().all(|(_, g)| *g <= radius);
    Ok(BallCheck {
        passed,
        dy,
        slack,
        gaps,
        max_excess,
    })
}

/// Outcome of the uniform-boundedness check at one frequency.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BoundednessCheck {
    pub omega: f64,
    pub bounds: BoundSet,
    pub max_err_lambda: f64,
    pub passed: bool,
}

/// Runs a campaign and tests `max_k ‖z_k - x*‖_λ ≤ D₂` with `D₁` measured
/// from that campaign's disturbance.
pub fn boundedness_check(map: &QuadraticMap, cfg: &IlesConfig) -> Result<(BoundednessCheck, IlesCampaign)> {
    let camp = run_campaign(map, cfg, &Retain::None).map_err(|e| e.source)?;
    let params = equivalent_ilc_params(map, cfg)?;
    let cp = contraction_params_for(&params)?;
    let x_star_norm = lambda_norm(&map.x_star_trajectory(*cfg.grid())?, cfg.lambda)?;
    let b = bounds(&params, cp.rho, x_star_norm, Some(camp.max_disturbance_lambda()))?;
    let max_err_lambda = camp.max_mlb_err_lambda();
    Ok((
        BoundednessCheck {
            omega: cfg.omega,
            bounds: b,
            max_err_lambda,
            passed: max_err_lambda <= b.d2,
        },
        camp,
    ))
}

/// Bisects `[lo, hi]` for the smallest ω at which [`boundedness_check`]
/// passes, assuming it fails at `lo` and passes at `hi`. Stops when the
/// bracket is narrower than `rel_tol · hi`.
pub fn locate_omega_threshold(
    map: &QuadraticMap,
    base: &IlesConfig,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<f64> {
    if !(lo > 0.0 && lo < hi && rel_tol > 0.0) {
        return Err(invalid("need 0 < lo < hi and a positive tolerance"));
    }
    let passes = |w: f64| -> Result<bool> { Ok(boundedness_check(map, &base.with_omega(w)?)?.0.passed) };
    if passes(lo)? {
        return Ok(lo);
    }
    if !passes(hi)? {
        return Err(Error::PreconditionViolation(format!(
            "boundedness fails at the upper end omega = {hi}"
        )));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > rel_tol * b {
        let mid = 0.5 * (a + b);
        if passes(mid)? {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(b)
}
