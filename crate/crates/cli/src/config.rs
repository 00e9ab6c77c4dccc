//! Experiment configuration files.
//!
//! A config is TOML with a top-level `mode`, an `output_dir`, a `[map]`
//! table and one table named after the mode. Unknown keys and tables that
//! do not belong to the mode are rejected. The same structure is accepted
//! as JSON, either bare or as the `config` field of a `run.json` manifest.
//!
//! ```toml
//! mode = "iles"
//! output_dir = "out/iles-w15"
//!
//! [map]
//! builtin = "sine-example"
//!
//! [iles]
//! alpha = 0.1
//! beta = 0.3
//! omega = 15.0
//! k_max = 50
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use iles::{QuadraticMap, Waveform, WaveformVector};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Ilc,
    IlcBeta0,
    Iles,
    SweepOmega,
    VerifyContraction,
    ReproduceFigures,
}

impl Mode {
    pub fn section(self) -> &'static str {
        match self {
            Mode::Ilc => "ilc",
            Mode::IlcBeta0 => "ilc-beta0",
            Mode::Iles => "iles",
            Mode::SweepOmega => "sweep-omega",
            Mode::VerifyContraction => "verify-contraction",
            Mode::ReproduceFigures => "reproduce-figures",
        }
    }
}

/// Either the built-in example or an explicit quadratic map.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    /// Row-major rows of `Q`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// One waveform per component of `x*`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_star: Option<Vec<Waveform>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_star: Option<Waveform>,
}

impl MapSpec {
    pub fn builtin() -> Self {
        MapSpec {
            builtin: Some("sine-example".into()),
            ..MapSpec::default()
        }
    }

    pub fn build(&self) -> Result<QuadraticMap> {
        let explicit = self.q.is_some() || self.delta.is_some() || self.x_star.is_some() || self.f_star.is_some();
        match (&self.builtin, explicit) {
            (Some(name), false) if name == "sine-example" => Ok(QuadraticMap::sine_example()),
            (Some(name), false) => bail!("unknown builtin map {name:?} (available: \"sine-example\")"),
            (Some(_), true) => bail!("map sets both `builtin` and explicit fields"),
            (None, false) => bail!("map needs `builtin` or `q`, `delta`, `x_star`, `f_star`"),
            (None, true) => {
                let q = self.q.as_ref().ok_or_else(|| anyhow!("map is missing `q`"))?;
                let delta = self.delta.ok_or_else(|| anyhow!("map is missing `delta`"))?;
                let x_star = self.x_star.clone().ok_or_else(|| anyhow!("map is missing `x_star`"))?;
                let f_star = self.f_star.clone().ok_or_else(|| anyhow!("map is missing `f_star`"))?;
                let n = q.len();
                if q.iter().any(|row| row.len() != n) {
                    bail!("`q` must be a square matrix given as {n} rows of {n} values");
                }
                let flat: Vec<f64> = q.iter().flatten().copied().collect();
                Ok(QuadraticMap::new(
                    DMatrix::from_row_slice(n, n, &flat),
                    delta,
                    Arc::new(WaveformVector::new(x_star)?),
                    Arc::new(WaveformVector::new(vec![f_star])?),
                )?)
            }
        }
    }
}

fn default_alpha() -> f64 {
    0.1
}
fn default_lambda() -> f64 {
    1.0
}
fn default_horizon() -> f64 {
    iles::plant::BUILTIN_HORIZON
}
fn default_dt() -> f64 {
    0.01
}
fn default_steps() -> usize {
    iles::integrator::DEFAULT_STEPS_PER_DITHER_PERIOD
}
fn default_k_max() -> usize {
    50
}
fn default_trials() -> usize {
    200
}
pub(crate) fn default_ks() -> Vec<String> {
    ["1", "2", "5", "20", "inf"].map(String::from).to_vec()
}
fn default_beta_ilc() -> f64 {
    0.5
}
fn default_beta_iles() -> f64 {
    0.3
}
fn default_true() -> bool {
    true
}

/// `[ilc]`: forgetting-factor ILC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlcSection {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta_ilc")]
    pub beta: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Iterations whose `z_k` is written to `iter_<k>_z.csv`.
    #[serde(default)]
    pub dump: Vec<usize>,
    #[serde(default = "default_true")]
    pub checks: bool,
}

/// `[ilc-beta0]`: the `β = 0` law with a constant gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlcBeta0Section {
    /// The constant gain `Γ` (scalar times identity).
    pub gain: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default)]
    pub dump: Vec<usize>,
    #[serde(default = "default_true")]
    pub checks: bool,
}

/// `[iles]`: one dithered campaign and its MLB companion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlesSection {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta_iles")]
    pub beta: f64,
    pub omega: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Upper bound on the step; the dither resolution may force a finer one.
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_steps")]
    pub steps_per_dither_period: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Iterations whose `x_k`, `z_k` are written to `iter_<k>_{x,z}.csv`.
    #[serde(default)]
    pub dump: Vec<usize>,
    /// Tail length for the λ-ball check, and its relative slack.
    #[serde(default = "default_tail")]
    pub tail: usize,
    #[serde(default = "default_slack")]
    pub slack: f64,
    #[serde(default = "default_true")]
    pub checks: bool,
}

fn default_tail() -> usize {
    10
}
fn default_slack() -> f64 {
    0.25
}

/// `[sweep-omega]`: disturbance scaling over dither frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta_iles")]
    pub beta: f64,
    pub omegas: Vec<f64>,
    #[serde(default = "default_k_probe")]
    pub k_probe: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_steps")]
    pub steps_per_dither_period: usize,
    /// Worker cap; `ILES_THREADS` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Accepted slope interval.
    #[serde(default = "default_slope_band")]
    pub slope_band: [f64; 2],
    #[serde(default = "default_true")]
    pub checks: bool,
}

fn default_k_probe() -> usize {
    10
}
fn default_slope_band() -> [f64; 2] {
    [-0.65, -0.35]
}

/// `[verify-contraction]`: empirical contraction ratios of `T_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractionSection {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta_iles")]
    pub beta: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Iteration indices as strings; `"inf"` is the limit operator.
    #[serde(default = "default_ks")]
    pub ks: Vec<String>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub checks: bool,
}

/// `[reproduce-figures]`: the canonical campaigns and their plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiguresSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
}

impl Default for FiguresSection {
    fn default() -> Self {
        FiguresSection {
            dt: default_dt(),
            k_max: default_k_max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub output_dir: PathBuf,
    #[serde(default = "MapSpec::builtin")]
    pub map: MapSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ilc: Option<IlcSection>,
    #[serde(default, rename = "ilc-beta0", skip_serializing_if = "Option::is_none")]
    pub ilc_beta0: Option<IlcBeta0Section>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iles: Option<IlesSection>,
    #[serde(default, rename = "sweep-omega", skip_serializing_if = "Option::is_none")]
    pub sweep_omega: Option<SweepSection>,
    #[serde(default, rename = "verify-contraction", skip_serializing_if = "Option::is_none")]
    pub verify_contraction: Option<ContractionSection>,
    #[serde(default, rename = "reproduce-figures", skip_serializing_if = "Option::is_none")]
    pub reproduce_figures: Option<FiguresSection>,
}

impl RunConfig {
    fn present_sections(&self) -> Vec<&'static str> {
        let mut s = Vec::new();
        if self.ilc.is_some() {
            s.push("ilc");
        }
        if self.ilc_beta0.is_some() {
            s.push("ilc-beta0");
        }
        if self.iles.is_some() {
            s.push("iles");
        }
        if self.sweep_omega.is_some() {
            s.push("sweep-omega");
        }
        if self.verify_contraction.is_some() {
            s.push("verify-contraction");
        }
        if self.reproduce_figures.is_some() {
            s.push("reproduce-figures");
        }
        s
    }

    /// Checks that exactly the mode's table is present and the map builds.
    pub fn validate(&mut self) -> Result<()> {
        let want = self.mode.section();
        if let Some(other) = self.present_sections().into_iter().find(|s| *s != want) {
            bail!("table [{other}] does not belong to mode {want:?}");
        }
        if self.mode == Mode::ReproduceFigures && self.reproduce_figures.is_none() {
            self.reproduce_figures = Some(FiguresSection::default());
        }
        if self.present_sections().is_empty() {
            bail!("mode {want:?} needs a [{want}] table");
        }
        self.map.build().context("invalid [map]")?;
        if let Some(s) = &self.verify_contraction {
            parse_ks(&s.ks)?;
        }
        Ok(())
    }
}

pub fn parse_ks(ks: &[String]) -> Result<Vec<iles::Iteration>> {
    ks.iter()
        .map(|k| match k.as_str() {
            "inf" | "∞" => Ok(iles::Iteration::Limit),
            s => match s.parse::<usize>() {
                Ok(0) | Err(_) => bail!("iteration index {s:?} must be a positive integer or \"inf\""),
                Ok(v) => Ok(iles::Iteration::Finite(v)),
            },
        })
        .collect()
}

/// Finds the 1-based line where `key` is assigned inside `[section]` (or at
/// the top level when `section` is `None`).
fn locate(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.starts_with('[') {
            current = Some(l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
            if section == current.as_deref() && key.is_empty() {
                return Some(i + 1);
            }
            continue;
        }
        if current.as_deref() == section {
            if let Some((k, _)) = l.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn anchor(text: &str, err: anyhow::Error, hint: Option<(&str, &str)>) -> anyhow::Error {
    match hint.and_then(|(s, k)| locate(text, Some(s), k).or_else(|| locate(text, Some(s), ""))) {
        Some(line) => err.context(format!("line {line}")),
        None => err,
    }
}

/// Parses a TOML or JSON config (or a `run.json` manifest) from text.
pub fn parse_config(text: &str, json: bool) -> Result<RunConfig> {
    let mut cfg: RunConfig = if json {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| {
            anyhow!("line {}, column {}: {e}", e.line(), e.column())
        })?;
        let v = match v {
            serde_json::Value::Object(mut m) if m.contains_key("config") && !m.contains_key("mode") => {
                m.remove("config").expect("checked")
            }
            other => other,
        };
        serde_json::from_value(v).map_err(|e| anyhow!("invalid config: {e}"))?
    } else {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            match line {
                Some(l) => anyhow!("line {l}: {}", e.message()),
                None => anyhow!("{e}"),
            }
        })?
    };
    let section = cfg.mode.section();
    if let Err(e) = cfg.validate() {
        let hint = if e.to_string().contains("[map]") {
            Some(("map", ""))
        } else {
            Some((section, ""))
        };
        return Err(anchor(text, e, hint));
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let json = path.extension().is_some_and(|e| e == "json");
    parse_config(&text, json).with_context(|| format!("in {}", path.display()))
}
