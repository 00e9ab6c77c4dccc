//! Mode runners.
//!
//! Every runner computes its outputs in memory. Nothing touches the output
//! directory until [`commit`] is called, so an error leaves no files behind.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use iles::analysis::{
    ball_convergence_check, bound_dy, bounds, c_norm_feasibility, omega_scaling_study,
    verify_contraction,
};
use iles::trajectory::format_f64;
use iles::{
    contraction_params_for, equivalent_ilc_params, fixed_point_y_inf, lambda_norm, make_grid,
    run_campaign, run_ilc_campaign, IlcCampaign, IlcLaw, IlcParams, IlesCampaign, IlesConfig,
    QuadraticMap, Retain, Trajectory,
};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    parse_ks, ContractionSection, FiguresSection, IlcBeta0Section, IlcSection, IlesSection, Mode,
    RunConfig, SweepSection,
};
use crate::plot::{emit_svg_plot, PlotStyle, Series};

/// Environment variable that caps sweep parallelism.
pub const THREADS_ENV: &str = "ILES_THREADS";

const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_MAX_ITERS: usize = 10_000;

/// Frequencies of the scaling study run by `verify` on an ILES config.
pub const VERIFY_OMEGAS: [f64; 5] = [25.0, 50.0, 100.0, 200.0, 400.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            passed,
            detail,
        }
    }
}

/// Everything a run produces, held until [`commit`].
#[derive(Debug, Default)]
pub struct Outcome {
    /// Paths relative to the output directory.
    pub files: BTreeMap<PathBuf, Vec<u8>>,
    pub checks: Vec<Check>,
    pub timings: BTreeMap<String, f64>,
    pub summary: serde_json::Map<String, Value>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn file(&mut self, path: impl Into<PathBuf>, body: impl Into<Vec<u8>>) {
        self.files.insert(path.into(), body.into());
    }

    fn svg(&mut self, path: &str, series: &[Series], style: PlotStyle) -> Result<()> {
        let svg = emit_svg_plot(series, &style).with_context(|| format!("plotting {path}"))?;
        self.file(path, svg);
        Ok(())
    }

    fn timed<T>(&mut self, phase: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        *self.timings.entry(phase.into()).or_default() += start.elapsed().as_secs_f64();
        Ok(out)
    }

    fn note(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.summary.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }
}

/// Reads the sweep worker cap from [`THREADS_ENV`], falling back to `configured`.
pub fn thread_cap(configured: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => bail!("{THREADS_ENV} must be a positive integer, got {v:?}"),
        },
        Err(_) => Ok(configured),
    }
}

fn check_dumps(dump: &[usize], k_max: usize) -> Result<()> {
    if let Some(k) = dump.iter().find(|k| **k == 0 || **k > k_max) {
        bail!("dump iteration {k} is outside 1..={k_max}");
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

pub fn ilc_campaign_csv(c: &IlcCampaign) -> String {
    let mut s = String::from("k,gamma_k,err_c,err_lambda,err_l2,j_index,fixed_point_gap,step_change\n");
    for r in &c.reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.k,
            opt(r.gamma_k),
            format_f64(r.err_c),
            format_f64(r.err_lambda),
            format_f64(r.err_l2),
            format_f64(r.j_index),
            opt(r.fixed_point_gap),
            format_f64(r.step_change)
        );
    }
    s
}

pub fn iles_campaign_csv(c: &IlesCampaign) -> String {
    let mut s = String::from("k,err_c,err_lambda,mlb_err_lambda,disturbance_lambda,disturbance_c\n");
    for r in &c.reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.k,
            format_f64(r.err_c),
            format_f64(r.err_lambda),
            format_f64(r.mlb_err_lambda),
            format_f64(r.disturbance_lambda),
            format_f64(r.disturbance_c)
        );
    }
    s
}

fn curve(label: &str, pts: impl IntoIterator<Item = (usize, f64)>) -> Series {
    Series::new(label, pts.into_iter().map(|(k, v)| (k as f64, v)).collect())
}

fn ilc_params(map: &QuadraticMap, alpha: f64, beta: f64, lambda: f64, horizon: f64, dt: f64, k_max: usize) -> Result<IlcParams> {
    Ok(IlcParams::new(alpha, beta, lambda, map.clone(), make_grid(horizon, dt)?, k_max)?)
}

fn iles_config(map: &QuadraticMap, s: &IlesSection) -> Result<IlesConfig> {
    if map.dim() != 1 {
        bail!("ILES campaigns support one-dimensional maps only");
    }
    Ok(IlesConfig::new(
        s.alpha,
        s.beta,
        s.omega,
        s.horizon,
        s.dt,
        s.k_max,
        s.steps_per_dither_period,
        s.lambda,
    )?)
}

/// Forgetting-factor ILC.
pub fn run_ilc(map: &QuadraticMap, s: &IlcSection) -> Result<Outcome> {
    let mut out = Outcome::default();
    check_dumps(&s.dump, s.k_max)?;
    let p = ilc_params(map, s.alpha, s.beta, s.lambda, s.horizon, s.dt, s.k_max)?;
    let retain = Retain::Only(s.dump.clone());
    let c = out.timed("campaign", || Ok(run_ilc_campaign(&p, &IlcLaw::Forgetting, &retain)?))?;
    out.file("campaign.csv", ilc_campaign_csv(&c));
    for st in &c.retained {
        out.file(format!("iter_{}_z.csv", st.k), st.z.to_csv());
    }
    if let Some(fp) = &c.y_inf {
        out.file("y_inf.csv", fp.y.to_csv());
        out.note("fixed_point_iterations", fp.iterations)?;
    }
    let last = c.reports.last().expect("k_max >= 1");
    out.note("final_err_lambda", last.err_lambda)?;
    out.note("final_fixed_point_gap", last.fixed_point_gap)?;
    if s.checks {
        let cp = contraction_params_for(&p)?;
        out.checks.push(Check::new(
            "contraction",
            cp.contracts(),
            format!("rho = {:.6}, lambda0 = {:.6}, lambda = {}", cp.rho, cp.lambda0, s.lambda),
        ));
        let settled = last.fixed_point_gap.is_some_and(|g| g <= 1e-4);
        out.checks.push(Check::new(
            "settles-to-limit",
            settled,
            format!("|y_k - y_inf|_lambda at k = {} is {}", last.k, opt(last.fixed_point_gap)),
        ));
        out.checks.push(Check::new(
            "nonzero-gap",
            last.err_lambda > 1e-3,
            format!("|y_k|_lambda at k = {} is {:.6e}", last.k, last.err_lambda),
        ));
    }
    Ok(out)
}

/// The `β = 0` law with a constant scalar gain.
pub fn run_ilc_beta0(map: &QuadraticMap, s: &IlcBeta0Section) -> Result<Outcome> {
    let mut out = Outcome::default();
    check_dumps(&s.dump, s.k_max)?;
    if !(s.gain.is_finite() && s.gain > 0.0) {
        bail!("gain must be positive, got {}", s.gain);
    }
    // α only enters the forgetting law; any positive value is inert here
    let p = ilc_params(map, 1.0, 0.0, s.lambda, s.horizon, s.dt, s.k_max)?;
    let n = map.dim();
    let law = IlcLaw::BetaZero {
        gain: DMatrix::identity(n, n) * s.gain,
    };
    let retain = Retain::Only(s.dump.clone());
    let c = out.timed("campaign", || Ok(run_ilc_campaign(&p, &law, &retain)?))?;
    out.file("campaign.csv", ilc_campaign_csv(&c));
    for st in &c.retained {
        out.file(format!("iter_{}_z.csv", st.k), st.z.to_csv());
    }
    let (first, last) = (&c.reports[0], c.reports.last().expect("k_max >= 1"));
    out.note("err_l2_ratio", last.err_l2 / first.err_l2)?;
    if s.checks {
        let tol = |a: f64| a * 1e-12;
        let j_mono = c.reports.windows(2).all(|w| w[1].j_index <= w[0].j_index + tol(w[0].j_index));
        let l2_mono = c.reports.windows(2).all(|w| w[1].err_l2 <= w[0].err_l2 + tol(w[0].err_l2));
        out.checks.push(Check::new(
            "j-index-non-increasing",
            j_mono,
            format!("J_1 = {:.6e}, J_{} = {:.6e}", first.j_index, last.k, last.j_index),
        ));
        out.checks.push(Check::new(
            "l2-error-non-increasing",
            l2_mono,
            format!("err_l2 from {:.6e} to {:.6e}", first.err_l2, last.err_l2),
        ));
    }
    Ok(out)
}

/// One ILES campaign with its MLB companion.
pub fn run_iles(map: &QuadraticMap, s: &IlesSection) -> Result<Outcome> {
    let mut out = Outcome::default();
    check_dumps(&s.dump, s.k_max)?;
    let cfg = iles_config(map, s)?;
    if s.checks && (s.tail == 0 || s.tail > s.k_max) {
        bail!("tail = {} must lie in 1..={}", s.tail, s.k_max);
    }
    let mut keep: BTreeSet<usize> = s.dump.iter().copied().collect();
    if s.checks {
        keep.extend(s.k_max + 1 - s.tail..=s.k_max);
    }
    let retain = Retain::Only(keep.into_iter().collect());
    let camp = out.timed("campaign", || {
        run_campaign(map, &cfg, &retain).map_err(|e| anyhow::Error::new(e.source).context(format!("campaign failed at iteration {}", e.k)))
    })?;
    out.file("campaign.csv", iles_campaign_csv(&camp));
    for it in camp.retained.iter().filter(|it| s.dump.contains(&it.k)) {
        out.file(format!("iter_{}_x.csv", it.k), it.x.to_csv());
        out.file(format!("iter_{}_z.csv", it.k), it.z.to_csv());
    }
    out.note("grid_step", cfg.grid().step())?;
    out.note("max_disturbance_lambda", camp.max_disturbance_lambda())?;
    out.note("max_disturbance_c", camp.max_disturbance_c())?;
    out.note("max_err_c", camp.max_err_c())?;
    if s.checks {
        let (checks, analysis) = out.timed("checks", || iles_checks(map, &cfg, &camp, s.tail, s.slack))?;
        out.checks.extend(checks);
        out.note("analysis", analysis)?;
    }
    Ok(out)
}

fn iles_checks(
    map: &QuadraticMap,
    cfg: &IlesConfig,
    camp: &IlesCampaign,
    tail: usize,
    slack: f64,
) -> Result<(Vec<Check>, Value)> {
    let ep = equivalent_ilc_params(map, cfg)?;
    let cp = contraction_params_for(&ep)?;
    if !cp.contracts() {
        let check = Check::new(
            "contraction",
            false,
            format!("rho = {:.6} at lambda = {} (lambda0 = {:.6})", cp.rho, cfg.lambda, cp.lambda0),
        );
        return Ok((vec![check], json!({ "contraction": cp })));
    }
    let x_star = map.x_star_trajectory(*cfg.grid())?;
    let d1 = camp.max_disturbance_lambda();
    let b = bounds(&ep, cp.rho, lambda_norm(&x_star, cfg.lambda)?, Some(d1))?;
    let max_y = camp.max_mlb_err_lambda();
    let y_inf = fixed_point_y_inf(&ep, FIXED_POINT_TOL, FIXED_POINT_MAX_ITERS)?.y;
    let ball = ball_convergence_check(camp, &x_star, &y_inf, bound_dy(cp.rho, d1), tail, slack)?;
    let worst = ball.gaps.iter().map(|g| g.1).fold(0.0, f64::max);
    let analysis = json!({ "contraction": cp, "bounds": b, "ball": ball });
    let checks = vec![
        Check::new(
            "uniform-bound",
            max_y <= b.d2,
            format!("max_k |z_k - x*|_lambda = {max_y:.6e}, D2 = {:.6e}", b.d2),
        ),
        Check::new(
            "lambda-ball",
            ball.passed,
            format!(
                "max tail |y_k - y_inf|_lambda = {worst:.6e}, radius = {:.6e}",
                ball.dy * (1.0 + slack)
            ),
        ),
    ];
    Ok((checks, analysis))
}

/// Disturbance scaling over a list of dither frequencies.
pub fn run_sweep(map: &QuadraticMap, s: &SweepSection) -> Result<Outcome> {
    let mut out = Outcome::default();
    if map.dim() != 1 {
        bail!("ILES campaigns support one-dimensional maps only");
    }
    let first = *s.omegas.first().context("omegas must not be empty")?;
    let base = IlesConfig::new(
        s.alpha,
        s.beta,
        first,
        s.horizon,
        s.dt,
        s.k_probe,
        s.steps_per_dither_period,
        s.lambda,
    )?;
    let threads = thread_cap(s.threads)?;
    let study = out.timed("sweep", || Ok(omega_scaling_study(map, &base, &s.omegas, s.k_probe, threads)?))?;
    let mut csv = String::from("omega,disturbance_c,disturbance_lambda\n");
    for p in &study.points {
        let _ = writeln!(csv, "{},{},{}", format_f64(p.omega), format_f64(p.disturbance_c), format_f64(p.disturbance_lambda));
    }
    out.file("sweep.csv", csv);
    let pts = study.points.iter().map(|p| (p.omega.ln(), p.disturbance_c.ln())).collect();
    let fit = s
        .omegas
        .iter()
        .map(|w| (w.ln(), study.intercept + study.slope * w.ln()))
        .collect();
    out.svg(
        "sweep.svg",
        &[Series::new("measured", pts), Series::new(format!("fit, slope {:.3}", study.slope), fit)],
        PlotStyle {
            title: "Disturbance against dither frequency".into(),
            x_label: "ln omega".into(),
            y_label: "ln max_k |x_k - z_k|_C".into(),
            log_y: false,
        },
    )?;
    out.note("slope", study.slope)?;
    out.note("intercept", study.intercept)?;
    if s.checks {
        let [lo, hi] = s.slope_band;
        out.checks.push(Check::new(
            "scaling-slope",
            (lo..=hi).contains(&study.slope),
            format!("slope {:.4} against [{lo}, {hi}]", study.slope),
        ));
    }
    Ok(out)
}

/// Empirical contraction ratios.
pub fn run_contraction(map: &QuadraticMap, s: &ContractionSection) -> Result<Outcome> {
    let mut out = Outcome::default();
    let ks = parse_ks(&s.ks)?;
    let p = ilc_params(map, s.alpha, s.beta, s.lambda, s.horizon, s.dt, 1)?;
    let r = out.timed("contraction", || Ok(verify_contraction(&p, &ks, s.trials, s.seed)?))?;
    let mut csv = String::from("k,max_ratio,pairs,passed\n");
    for k in &r.per_k {
        let _ = writeln!(csv, "{},{},{},{}", k.k, format_f64(k.max_ratio), k.pairs, k.passed);
    }
    out.file("contraction.csv", csv);
    out.note("report", &r)?;
    out.note("c_norm_feasible", c_norm_feasibility(s.beta))?;
    if s.checks {
        let worst = r.per_k.iter().map(|k| k.max_ratio).fold(0.0, f64::max);
        out.checks.push(Check::new(
            "contraction-ratio",
            r.passed() && r.skipped == 0,
            format!("max ratio {worst:.6}, rho {:.6}, {} skipped pairs", r.params.rho, r.skipped),
        ));
    }
    Ok(out)
}

fn figure_ks(k_max: usize) -> Vec<usize> {
    let set: BTreeSet<usize> = [1, 2, 3, k_max].into_iter().filter(|k| *k <= k_max).collect();
    set.into_iter().collect()
}

fn overlay(out: &mut Outcome, path: &str, title: &str, its: &[(usize, &Trajectory)], x_star: &Trajectory, var: &str) -> Result<()> {
    let mut series: Vec<Series> = its
        .iter()
        .map(|(k, x)| Series::from_trajectory(format!("{var}_{k}"), x))
        .collect();
    series.push(Series::from_trajectory("x*", x_star));
    out.svg(
        path,
        &series,
        PlotStyle {
            title: title.into(),
            x_label: "t".into(),
            y_label: "state".into(),
            log_y: false,
        },
    )
}

fn log_style(title: &str, y: &str) -> PlotStyle {
    PlotStyle {
        title: title.into(),
        x_label: "iteration k".into(),
        y_label: y.into(),
        log_y: true,
    }
}

/// The four canonical campaigns on the built-in map and their plots.
pub fn run_figures(s: &FiguresSection) -> Result<Outcome> {
    let map = QuadraticMap::sine_example();
    let horizon = iles::plant::BUILTIN_HORIZON;
    let ks = figure_ks(s.k_max);
    let mut out = Outcome::default();
    let x_star_ilc = map.x_star_trajectory(make_grid(horizon, s.dt)?)?;

    let ilc_run = |dir: &str, title: &str, law: IlcLaw, beta: f64, out: &mut Outcome| -> Result<IlcCampaign> {
        let p = ilc_params(&map, 0.1, beta, 1.0, horizon, s.dt, s.k_max)?;
        let c = out.timed(dir, || Ok(run_ilc_campaign(&p, &law, &Retain::Only(ks.clone()))?))?;
        out.file(format!("{dir}/campaign.csv"), ilc_campaign_csv(&c));
        let its: Vec<(usize, &Trajectory)> = c.retained.iter().map(|st| (st.k, &st.z)).collect();
        overlay(out, &format!("{dir}_overlay.svg"), title, &its, &x_star_ilc, "z")?;
        Ok(c)
    };
    let forgetting = ilc_run("ilc_beta05", "ILC with forgetting factor beta = 0.5", IlcLaw::Forgetting, 0.5, &mut out)?;
    let beta0 = ilc_run(
        "ilc_beta0",
        "ILC with beta = 0, gain 0.05",
        IlcLaw::BetaZero {
            gain: DMatrix::from_element(1, 1, 0.05),
        },
        0.0,
        &mut out,
    )?;
    out.svg(
        "ilc_beta05_convergence.svg",
        &[
            curve("|y_k|_lambda", forgetting.reports.iter().map(|r| (r.k, r.err_lambda))),
            curve(
                "|y_k - y_inf|_lambda",
                forgetting.reports.iter().filter_map(|r| r.fixed_point_gap.map(|g| (r.k, g))),
            ),
        ],
        log_style("ILC beta = 0.5: tracking error and gap to the limit", "norm"),
    )?;
    out.svg(
        "ilc_beta0_convergence.svg",
        &[
            curve("|y_k| weighted L2", beta0.reports.iter().map(|r| (r.k, r.err_l2))),
            curve("J_k", beta0.reports.iter().map(|r| (r.k, r.j_index))),
        ],
        log_style("ILC beta = 0: error and index", "value"),
    )?;

    let mut by_omega = Vec::new();
    for omega in [7.0, 15.0] {
        let dir = format!("iles_w{omega}");
        let cfg = IlesConfig::new(0.1, 0.3, omega, horizon, s.dt, s.k_max, iles::integrator::DEFAULT_STEPS_PER_DITHER_PERIOD, 1.0)?;
        let camp = out.timed(&dir, || {
            run_campaign(&map, &cfg, &Retain::Only(ks.clone())).map_err(|e| anyhow::Error::new(e.source))
        })?;
        out.file(format!("{dir}/campaign.csv"), iles_campaign_csv(&camp));
        let x_star = map.x_star_trajectory(*cfg.grid())?;
        let xs: Vec<(usize, &Trajectory)> = camp.retained.iter().map(|r| (r.k, &r.x)).collect();
        let zs: Vec<(usize, &Trajectory)> = camp.retained.iter().map(|r| (r.k, &r.z)).collect();
        overlay(&mut out, &format!("{dir}_x_overlay.svg"), &format!("Original system, omega = {omega}"), &xs, &x_star, "x")?;
        overlay(&mut out, &format!("{dir}_z_overlay.svg"), &format!("MLB system, omega = {omega}"), &zs, &x_star, "z")?;
        out.svg(
            &format!("{dir}_convergence.svg"),
            &[
                curve("|x_k - x*|_lambda", camp.reports.iter().map(|r| (r.k, r.err_lambda))),
                curve("|z_k - x*|_lambda", camp.reports.iter().map(|r| (r.k, r.mlb_err_lambda))),
                curve("|x_k - z_k|_lambda", camp.reports.iter().map(|r| (r.k, r.disturbance_lambda))),
            ],
            log_style(&format!("ILES errors, omega = {omega}"), "norm"),
        )?;
        by_omega.push(camp.reports.last().expect("k_max >= 1").disturbance_c);
    }
    out.note("disturbance_c_final", json!({ "omega_7": by_omega[0], "omega_15": by_omega[1] }))?;
    out.checks.push(Check::new(
        "faster-dither-smaller-gap",
        by_omega[1] < by_omega[0],
        format!(
            "|x_k - z_k|_C at k = {}: {:.6e} (omega 15) against {:.6e} (omega 7)",
            s.k_max, by_omega[1], by_omega[0]
        ),
    ));
    Ok(out)
}

/// Runs the configured mode.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let map = cfg.map.build().context("invalid [map]")?;
    fn need<T>(s: &Option<T>, mode: Mode) -> Result<&T> {
        s.as_ref().with_context(|| format!("mode {:?} needs a [{}] table", mode.section(), mode.section()))
    }
    match cfg.mode {
        Mode::Ilc => run_ilc(&map, need(&cfg.ilc, cfg.mode)?),
        Mode::IlcBeta0 => run_ilc_beta0(&map, need(&cfg.ilc_beta0, cfg.mode)?),
        Mode::Iles => run_iles(&map, need(&cfg.iles, cfg.mode)?),
        Mode::SweepOmega => run_sweep(&map, need(&cfg.sweep_omega, cfg.mode)?),
        Mode::VerifyContraction => run_contraction(&map, need(&cfg.verify_contraction, cfg.mode)?),
        Mode::ReproduceFigures => {
            if !cfg.map.builtin.as_deref().is_some_and(|b| b == "sine-example") {
                bail!("reproduce-figures runs on the built-in map only");
            }
            run_figures(need(&cfg.reproduce_figures, cfg.mode)?)
        }
    }
}

/// Runs the mode with every check enabled, then the analysis suite that
/// fits the mode, and stores the suite's results as `analysis.json`.
pub fn verify(cfg: &RunConfig) -> Result<Outcome> {
    let mut cfg = cfg.clone();
    if let Some(s) = cfg.ilc.as_mut() {
        s.checks = true;
    }
    if let Some(s) = cfg.ilc_beta0.as_mut() {
        s.checks = true;
    }
    if let Some(s) = cfg.iles.as_mut() {
        s.checks = true;
    }
    if let Some(s) = cfg.sweep_omega.as_mut() {
        s.checks = true;
    }
    if let Some(s) = cfg.verify_contraction.as_mut() {
        s.checks = true;
    }
    let mut out = execute(&cfg)?;
    let map = cfg.map.build()?;
    let mut analysis = serde_json::Map::new();
    match cfg.mode {
        Mode::Ilc => {
            let s = cfg.ilc.as_ref().expect("validated");
            let entry = ilc_suite(&map, &mut out, [s.alpha, s.beta, s.lambda, s.horizon, s.dt])?;
            analysis.insert("ilc".into(), entry);
        }
        Mode::Iles => {
            let s = cfg.iles.as_ref().expect("validated");
            let ic = iles_config(&map, s)?;
            if let Some(v) = out.summary.get("analysis") {
                analysis.insert("iles".into(), v.clone());
            }
            let study = out.timed("analysis.sweep", || {
                let base = ic.with_k_max(10)?;
                Ok(omega_scaling_study(&map, &base, &VERIFY_OMEGAS, 10, thread_cap(None)?)?)
            })?;
            out.checks.push(Check::new(
                "analysis.scaling-slope",
                (-0.65..=-0.35).contains(&study.slope),
                format!("slope {:.4} over omega in {VERIFY_OMEGAS:?}", study.slope),
            ));
            analysis.insert("scaling".into(), serde_json::to_value(&study)?);
        }
        Mode::SweepOmega => {
            let s = cfg.sweep_omega.as_ref().expect("validated");
            let entry = ilc_suite(&map, &mut out, [s.alpha, s.beta, s.lambda, s.horizon, s.dt])?;
            analysis.insert("ilc".into(), entry);
        }
        Mode::VerifyContraction => {
            let s = cfg.verify_contraction.as_ref().expect("validated");
            analysis.insert("c_norm_feasible".into(), json!(c_norm_feasibility(s.beta)));
        }
        Mode::IlcBeta0 | Mode::ReproduceFigures => {}
    }
    analysis.insert("checks".into(), serde_json::to_value(&out.checks)?);
    out.file("analysis.json", serde_json::to_string_pretty(&Value::Object(analysis))? + "\n");
    Ok(out)
}

/// Contraction constants, bounds and measured ratios for ILC parameters
/// `[alpha, beta, lambda, horizon, dt]`.
fn ilc_suite(map: &QuadraticMap, out: &mut Outcome, [alpha, beta, lambda, horizon, dt]: [f64; 5]) -> Result<Value> {
    let p = ilc_params(map, alpha, beta, lambda, horizon, dt, 1)?;
    let cp = contraction_params_for(&p)?;
    let mut entry = json!({
        "contraction": cp,
        "c_norm_feasible": c_norm_feasibility(beta),
    });
    if cp.contracts() {
        let x_star = map.x_star_trajectory(p.grid)?;
        let b = bounds(&p, cp.rho, lambda_norm(&x_star, lambda)?, None)?;
        let ks = parse_ks(&crate::config::default_ks())?;
        let r = out.timed("analysis.contraction", || Ok(verify_contraction(&p, &ks, 200, 0)?))?;
        let worst = r.per_k.iter().map(|k| k.max_ratio).fold(0.0, f64::max);
        out.checks.push(Check::new(
            "analysis.contraction-ratio",
            r.passed() && r.skipped == 0,
            format!("max ratio {worst:.6}, rho {:.6}", cp.rho),
        ));
        entry["bounds"] = serde_json::to_value(b)?;
        entry["ratios"] = serde_json::to_value(&r)?;
    }
    Ok(entry)
}

/// Writes every file of `out` and the `run.json` manifest under `dir`.
pub fn commit(dir: &Path, command: &str, cfg: &RunConfig, out: &Outcome) -> Result<()> {
    let manifest = json!({
        "tool": "iles",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": cfg,
        "timings_s": out.timings,
        "checks": out.checks,
        "passed": out.passed(),
        "summary": out.summary,
    });
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    for (rel, body) in &out.files {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
        }
        std::fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
    }
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("cannot write {}", path.display()))
}
