//! The time-varying quadratic cost `F(x, t) = f*(t) + (x - x*(t))ᵀ Q (x - x*(t))`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::trajectory::Trajectory;

/// Horizon of the built-in sine example (half a period of `x*`).
pub const BUILTIN_HORIZON: f64 = 20.0;

/// A pure time-to-vector mapping that can be queried at any `t`.
pub trait Evaluable: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn eval_into(&self, t: f64, out: &mut [f64]);

    /// Writes the exact time derivative when it is known. Returns `false`
    /// otherwise, in which case callers fall back to finite differences.
    fn derivative_into(&self, _t: f64, _out: &mut [f64]) -> bool {
        false
    }
}

/// Named scalar waveforms usable in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Waveform {
    Constant {
        value: f64,
    },
    /// `offset + amplitude * sin(frequency * t + phase)`
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `offset + amplitude * cos(frequency * t + phase)`
    Cosine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `c_0 + c_1 t + c_2 t² + ...`
    Polynomial {
        coefficients: Vec<f64>,
    },
}

impl Waveform {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Waveform::Constant { value } => *value,
            Waveform::Sine {
                amplitude,
                frequency,
                phase,
                offset,
            } => offset + amplitude * (frequency * t + phase).sin(),
            Waveform::Cosine {
                amplitude,
                frequency,
                phase,
                offset,
            } => offset + amplitude * (frequency * t + phase).cos(),
            Waveform::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            Waveform::Constant { .. } => 0.0,
            Waveform::Sine {
                amplitude,
                frequency,
                phase,
                ..
            } => amplitude * frequency * (frequency * t + phase).cos(),
            Waveform::Cosine {
                amplitude,
                frequency,
                phase,
                ..
            } => -amplitude * frequency * (frequency * t + phase).sin(),
            Waveform::Polynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (p, c)| acc * t + p as f64 * c),
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = match self {
            Waveform::Constant { value } => value.is_finite(),
            Waveform::Sine {
                amplitude,
                frequency,
                phase,
                offset,
            }
            | Waveform::Cosine {
                amplitude,
                frequency,
                phase,
                offset,
            } => [amplitude, frequency, phase, offset].iter().all(|v| v.is_finite()),
            Waveform::Polynomial { coefficients } => coefficients.iter().all(|v| v.is_finite()),
        };
        if finite {
            Ok(())
        } else {
            Err(invalid(format!("waveform has non-finite parameters: {self:?}")))
        }
    }
}

/// One waveform per component.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformVector(Vec<Waveform>);

impl WaveformVector {
    pub fn new(components: Vec<Waveform>) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("a waveform vector needs at least one component"));
        }
        for w in &components {
            w.validate()?;
        }
        Ok(WaveformVector(components))
    }

    pub fn components(&self) -> &[Waveform] {
        &self.0
    }
}

impl Evaluable for WaveformVector {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(&self.0) {
            *o = w.value(t);
        }
    }

    fn derivative_into(&self, t: f64, out: &mut [f64]) -> bool {
        for (o, w) in out.iter_mut().zip(&self.0) {
            *o = w.derivative(t);
        }
        true
    }
}

/// Adapts a sampled [`Trajectory`] into an evaluable by linear interpolation.
///
/// Queries outside the horizon are clamped to the end points.
#[derive(Debug, Clone)]
pub struct SampledSignal(Trajectory);

impl SampledSignal {
    pub fn new(trajectory: Trajectory) -> Self {
        SampledSignal(trajectory)
    }
}

impl Evaluable for SampledSignal {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let t = t.clamp(0.0, self.0.grid().horizon());
        self.0
            .interp_into(t, out)
            .expect("clamped time is always in range");
    }
}

/// Result of [`QuadraticMap::df_dt`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimePartial {
    pub value: f64,
    /// Set when a boundary time forced a one-sided difference.
    pub one_sided: bool,
}

/// The cost `F(x, t) = f*(t) + (x - x*(t))ᵀ Q (x - x*(t))` with `Q ⪰ δI`.
#[derive(Debug, Clone)]
pub struct QuadraticMap {
    q: DMatrix<f64>,
    delta: f64,
    x_star: Arc<dyn Evaluable>,
    f_star: Arc<dyn Evaluable>,
    horizon: Option<f64>,
}

impl QuadraticMap {
    /// Validates symmetry of `q`, that its smallest eigenvalue is at least
    /// `delta`, and that the evaluables have matching dimensions.
    pub fn new(
        q: DMatrix<f64>,
        delta: f64,
        x_star: Arc<dyn Evaluable>,
        f_star: Arc<dyn Evaluable>,
    ) -> Result<Self> {
        let n = q.nrows();
        if n == 0 || q.ncols() != n {
            return Err(invalid(format!("Q must be square and non-empty, got {}x{}", n, q.ncols())));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(invalid("Q has non-finite entries"));
        }
        let scale = q.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in (i + 1)..n {
                if (q[(i, j)] - q[(j, i)]).abs() > 1e-12 * scale {
                    return Err(invalid(format!("Q is not symmetric at ({i}, {j})")));
                }
            }
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(invalid(format!("delta must be positive, got {delta}")));
        }
        let min_eig = min_eigenvalue(&q);
        if min_eig < delta - 1e-12 * scale {
            return Err(invalid(format!(
                "smallest eigenvalue of Q is {min_eig}, below the certified bound delta = {delta}"
            )));
        }
        if x_star.dim() != n {
            return Err(invalid(format!(
                "x* has dimension {}, Q is {n}x{n}",
                x_star.dim()
            )));
        }
        if f_star.dim() != 1 {
            return Err(invalid("f* must be scalar"));
        }
        Ok(QuadraticMap {
            q,
            delta,
            x_star,
            f_star,
            horizon: None,
        })
    }

    /// The one-dimensional example `F = x² + 2 sin(πt/20) x`, i.e. `Q = 1`,
    /// `x* = -sin(πt/20)`, `f* = -sin²(πt/20)`.
    pub fn sine_example() -> Self {
        let w = PI / 20.0;
        let x_star = WaveformVector(vec![Waveform::Sine {
            amplitude: -1.0,
            frequency: w,
            phase: 0.0,
            offset: 0.0,
        }]);
        // -sin²(wt) = -1/2 + cos(2wt)/2
        let f_star = WaveformVector(vec![Waveform::Cosine {
            amplitude: 0.5,
            frequency: 2.0 * w,
            phase: 0.0,
            offset: -0.5,
        }]);
        let mut map = QuadraticMap::new(
            DMatrix::from_element(1, 1, 1.0),
            1.0,
            Arc::new(x_star),
            Arc::new(f_star),
        )
        .expect("builtin map is valid");
        map.horizon = Some(BUILTIN_HORIZON);
        map
    }

    pub fn with_horizon_hint(mut self, horizon: f64) -> Self {
        self.horizon = Some(horizon);
        self
    }

    pub fn horizon_hint(&self) -> Option<f64> {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn x_star_at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.x_star.eval_into(t, &mut out);
        out
    }

    pub fn f_star_at(&self, t: f64) -> f64 {
        let mut out = [0.0];
        self.f_star.eval_into(t, &mut out);
        out[0]
    }

    /// `ẋ*(t)`, exact when the evaluable knows it, else a central difference.
    pub fn x_star_derivative(&self, t: f64) -> Vec<f64> {
        derivative_of(self.x_star.as_ref(), t, self.horizon).0
    }

    /// `x*` sampled on the nodes of `grid`.
    pub fn x_star_trajectory(&self, grid: crate::TimeGrid) -> Result<Trajectory> {
        let n = self.dim();
        Trajectory::from_fn(grid, n, |t, out| self.x_star.eval_into(t, out))
    }

    /// `ẋ*` on the nodes of `grid`.
    pub fn x_star_derivative_trajectory(&self, grid: crate::TimeGrid) -> Result<Trajectory> {
        let n = self.dim();
        let horizon = Some(self.horizon.unwrap_or(grid.horizon()));
        Trajectory::from_fn(grid, n, |t, out| {
            out.copy_from_slice(&derivative_of(self.x_star.as_ref(), t, horizon).0)
        })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(invalid(format!(
                "point has dimension {}, map has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    fn offset(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut e = self.x_star_at(t);
        for (ei, xi) in e.iter_mut().zip(x) {
            *ei = xi - *ei;
        }
        e
    }

    fn quad_form(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += a[i] * self.q[(i, j)] * b[j];
            }
        }
        s
    }

    /// `F(x, t)`.
    pub fn eval(&self, x: &[f64], t: f64) -> Result<f64> {
        self.check_dim(x)?;
        let e = self.offset(x, t);
        Ok(self.f_star_at(t) + self.quad_form(&e, &e))
    }

    /// `∇ₓF(x, t) = 2Q(x - x*(t))`.
    pub fn grad(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let e = self.offset(x, t);
        let n = self.dim();
        Ok((0..n)
            .map(|i| 2.0 * (0..n).map(|j| self.q[(i, j)] * e[j]).sum::<f64>())
            .collect())
    }

    /// `∂F/∂t` at fixed `x`: `ḟ*(t) - 2(x - x*(t))ᵀ Q ẋ*(t)`.
    pub fn df_dt(&self, x: &[f64], t: f64) -> Result<TimePartial> {
        self.check_dim(x)?;
        let (xs_dot, xs_one_sided) = derivative_of(self.x_star.as_ref(), t, self.horizon);
        let (fs_dot, fs_one_sided) = derivative_of(self.f_star.as_ref(), t, self.horizon);
        let e = self.offset(x, t);
        Ok(TimePartial {
            value: fs_dot[0] - 2.0 * self.quad_form(&e, &xs_dot),
            one_sided: xs_one_sided || fs_one_sided,
        })
    }

    /// `Q ⪰ δI` consequence `F(x, t) - f*(t) ≥ δ‖x - x*(t)‖²`, used by tests.
    pub fn excess(&self, x: &[f64], t: f64) -> Result<f64> {
        Ok(self.eval(x, t)? - self.f_star_at(t))
    }
}

fn min_eigenvalue(q: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(q.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

const DIFF_STEP: f64 = 1e-5;

/// Derivative of an evaluable, exact when available. The flag reports a
/// one-sided fallback at a horizon boundary.
fn derivative_of(e: &dyn Evaluable, t: f64, horizon: Option<f64>) -> (Vec<f64>, bool) {
    let n = e.dim();
    let mut out = vec![0.0; n];
    if e.derivative_into(t, &mut out) {
        return (out, false);
    }
    let h = DIFF_STEP * t.abs().max(1.0);
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let at_start = t - h < 0.0;
    let at_end = horizon.is_some_and(|l| t + h > l);
    let (lo, hi, width, one_sided) = if at_start {
        (t, t + h, h, true)
    } else if at_end {
        (t - h, t, h, true)
    } else {
        (t - h, t + h, 2.0 * h, false)
    };
    e.eval_into(lo, &mut a);
    e.eval_into(hi, &mut b);
    for ((o, x), y) in out.iter_mut().zip(&a).zip(&b) {
        *o = (y - x) / width;
    }
    (out, one_sided)
}
