//! Windowed Ramsey signals and the decay-envelope estimator.
//!
//! Fast beats are sampled densely inside short windows; the windows are placed at growing
//! delay offsets and only their oscillation amplitudes are fitted with an exponential.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet::FloquetSolution;

/// Components weaker than this fraction of the total weight are dropped from the synthesis.
const MIN_COMPONENT: f64 = 1e-12;
const FREQ_GRID: usize = 4000;
/// Offset of the default frame below the strongest signal component, GHz.
pub const DEFAULT_DETUNING: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RamseyConfig {
    /// Frame frequency subtracted from the beat, GHz. Unset: [`DEFAULT_DETUNING`] below the
    /// strongest component of the driven signal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
    /// Start delays of the dense windows, seconds, ascending.
    pub offsets: Vec<f64>,
    /// Window length, seconds.
    pub window: f64,
    /// Sampling step inside a window, seconds.
    pub step: f64,
    /// Decay constant used for synthesis, seconds; infinite for no decay.
    pub t2r_true: f64,
    /// Constant added to every sample.
    pub baseline: f64,
}

impl Default for RamseyConfig {
    fn default() -> Self {
        RamseyConfig {
            omega0: None,
            offsets: (0..16).map(|i| i as f64 * 4e-6).collect(),
            window: 20e-9,
            step: 1e-9,
            t2r_true: 23e-6,
            baseline: 0.0,
        }
    }
}

impl RamseyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.window > 0.0 && self.step < self.window) {
            return Err(Error::invalid(format!(
                "need 0 < step < window (got step {}, window {})",
                self.step, self.window
            )));
        }
        if self.offsets.is_empty() || self.offsets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("window offsets must be non-empty and strictly ascending"));
        }
        if !(self.t2r_true > 0.0) {
            return Err(Error::invalid(format!("t2r_true must be positive (got {})", self.t2r_true)));
        }
        Ok(())
    }

    fn samples_per_window(&self) -> usize {
        (self.window / self.step).round() as usize + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamseyWindow {
    pub offset: f64,
    /// Absolute delays, seconds.
    pub times: Vec<f64>,
    pub samples: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamseySignal {
    pub windows: Vec<RamseyWindow>,
    /// Sampling step, seconds.
    pub step: f64,
    /// Strongest beat used in the synthesis, GHz, when known.
    pub nominal_beat: Option<f64>,
}

/// `V(t) = exp(-t/T) sum_i a_i cos(2 pi f_i t) + baseline` for components `(f_i GHz, a_i)`.
pub fn synth_ramsey_components(components: &[(f64, f64)], config: &RamseyConfig) -> Result<RamseySignal> {
    config.validate()?;
    let m = config.samples_per_window();
    let windows = config
        .offsets
        .iter()
        .map(|&offset| {
            let times: Vec<f64> = (0..m).map(|j| offset + j as f64 * config.step).collect();
            let samples = times
                .iter()
                .map(|&t| {
                    let envelope = (-t / config.t2r_true).exp();
                    let osc: f64 = components.iter().map(|(f, a)| a * (std::f64::consts::TAU * f * 1e9 * t).cos()).sum();
                    envelope * osc + config.baseline
                })
                .collect();
            RamseyWindow { offset, times, samples }
        })
        .collect();
    let nominal_beat = components
        .iter()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(f, _)| f.abs());
    Ok(RamseySignal { windows, step: config.step, nominal_beat })
}

/// Ramsey signal of the driven qubit: components at `eps_01 + n Omega - omega0` weighted by
/// `weights` (pairs `(n, c_n)`), or by the sideband weights of the excited branch.
pub fn synth_ramsey_signal(
    sol: &FloquetSolution,
    config: &RamseyConfig,
    weights: Option<&[(i64, f64)]>,
) -> Result<RamseySignal> {
    let owned: Vec<(i64, f64)>;
    let weights = match weights {
        Some(w) => w,
        None => {
            let c = sol.cutoff();
            owned = (-c..=c).map(|n| (n, sol.sideband_weight(1, n))).collect();
            &owned
        }
    };
    let total: f64 = weights.iter().map(|(_, c)| c.abs()).sum();
    let line = |n: i64| sol.eps01() + n as f64 * sol.omega();
    let omega0 = config.omega0.unwrap_or_else(|| {
        let strongest = weights.iter().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).map_or(0, |w| w.0);
        line(strongest) - DEFAULT_DETUNING
    });
    let components: Vec<(f64, f64)> = weights
        .iter()
        .filter(|(_, c)| c.abs() > MIN_COMPONENT * total)
        .map(|&(n, c)| (line(n) - omega0, c))
        .collect();
    synth_ramsey_components(&components, config)
}

/// Decay estimate from the windowed amplitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct T2REstimate {
    /// Seconds; infinite when the fitted rate is not positive.
    pub t2r: f64,
    /// Standard error of `t2r`, seconds.
    pub t2r_stderr: f64,
    /// Fitted decay rate and its standard error, 1/s.
    pub rate: f64,
    pub rate_stderr: f64,
    /// Shared beat frequency of the windows, GHz.
    pub beat: f64,
    /// `(offset, amplitude)` per window.
    pub amplitudes: Vec<(f64, f64)>,
}

/// Least-squares sinusoid `a cos + b sin + c` at frequency `f` in every window; returns the
/// total residual and the amplitudes `sqrt(a^2 + b^2)`.
fn sinusoid_fit(signal: &RamseySignal, f: f64) -> (f64, Vec<f64>) {
    let mut sse = 0.0;
    let mut amps = Vec::with_capacity(signal.windows.len());
    for w in &signal.windows {
        let n = w.samples.len();
        let t0 = w.times[0];
        let x = DMatrix::from_fn(n, 3, |i, j| {
            let ph = std::f64::consts::TAU * f * 1e9 * (w.times[i] - t0);
            match j {
                0 => ph.cos(),
                1 => ph.sin(),
                _ => 1.0,
            }
        });
        let y = DVector::from_column_slice(&w.samples);
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * &y;
        let beta = match xtx.clone().cholesky() {
            Some(c) => c.solve(&xty),
            None => xtx.pseudo_inverse(1e-12).map(|p| p * &xty).unwrap_or_else(|_| DVector::zeros(3)),
        };
        sse += (&y - &x * &beta).norm_squared();
        amps.push(beta[0].hypot(beta[1]));
    }
    (sse, amps)
}

fn golden_min(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..100 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
        if hi - lo < 1e-13 * hi.max(1e-9) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Fits `A exp(-r t)` by Gauss-Newton started from the log-linear solution. Returns
/// `(r, stderr(r))`.
fn exponential_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let n = points.len();
    let positive: Vec<&(f64, f64)> = points.iter().filter(|p| p.1 > 0.0).collect();
    if positive.len() < 2 {
        return Err(Error::invalid("need at least two windows with a resolvable oscillation"));
    }
    // log-linear start
    let m = positive.len() as f64;
    let (st, sl) = positive.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1.ln()));
    let (tm, lm) = (st / m, sl / m);
    let (mut num, mut den) = (0.0, 0.0);
    for p in &positive {
        num += (p.0 - tm) * (p.1.ln() - lm);
        den += (p.0 - tm).powi(2);
    }
    let mut r = if den > 0.0 { -num / den } else { 0.0 };
    let mut a = (lm + r * tm).exp();
    let t_scale = points.iter().map(|p| p.0.abs()).fold(0.0, f64::max).max(1e-300);
    let mut jtj = Matrix2::zeros();
    let mut sse = 0.0;
    for _ in 0..100 {
        jtj = Matrix2::zeros();
        let mut jtr = Vector2::zeros();
        sse = 0.0;
        for &(t, y) in points {
            let e = (-r * t).exp();
            let res = y - a * e;
            // parameters (a, r * t_scale) keep the normal matrix well scaled
            let j = Vector2::new(e, -a * t * e / t_scale);
            jtj += j * j.transpose();
            jtr += j * res;
            sse += res * res;
        }
        let Some(step) = jtj.try_inverse().map(|inv| inv * jtr) else {
            return Err(Error::invalid("degenerate window offsets"));
        };
        a += step[0];
        r += step[1] / t_scale;
        if step[0].abs() < 1e-15 * a.abs() && step[1].abs() < 1e-15 {
            break;
        }
    }
    let dof = (n as f64 - 2.0).max(1.0);
    let cov = jtj.try_inverse().unwrap_or_else(Matrix2::zeros) * (sse / dof);
    Ok((r, cov[(1, 1)].max(0.0).sqrt() / t_scale))
}

/// Estimates the decay constant of a windowed Ramsey signal.
///
/// One beat frequency is shared by all windows and chosen to minimise the total residual of
/// per-window sinusoid fits; the window amplitudes are then fitted with an exponential.
pub fn extract_t2r(signal: &RamseySignal) -> Result<T2REstimate> {
    if signal.windows.len() < 3 {
        return Err(Error::invalid(format!("need at least 3 windows (got {})", signal.windows.len())));
    }
    if signal.windows.iter().any(|w| w.samples.len() < 4 || w.samples.len() != w.times.len()) {
        return Err(Error::invalid("each window needs at least 4 samples with matching times"));
    }
    let nyquist = 0.5 / (signal.step * 1e9);
    let aliasing = |beat: f64| {
        let required_step = 1.0 / (4.0 * beat * 1e9);
        if signal.step > required_step * (1.0 + 1e-12) {
            Err(Error::Aliasing { beat_ghz: beat, step: signal.step, required_step })
        } else {
            Ok(())
        }
    };
    if let Some(beat) = signal.nominal_beat {
        aliasing(beat)?;
    }
    let cost = |f: f64| sinusoid_fit(signal, f).0;
    let df = nyquist / FREQ_GRID as f64;
    let best = (1..FREQ_GRID)
        .map(|i| i as f64 * df)
        .min_by(|&a, &b| cost(a).total_cmp(&cost(b)))
        .expect("non-empty grid");
    let beat = golden_min((best - df).max(0.0), (best + df).min(nyquist), cost);
    aliasing(beat)?;
    let (_, amps) = sinusoid_fit(signal, beat);
    let amplitudes: Vec<(f64, f64)> = signal.windows.iter().map(|w| w.offset).zip(amps).collect();
    let (rate, rate_stderr) = exponential_fit(&amplitudes)?;
    let (t2r, t2r_stderr) =
        if rate > 0.0 { (1.0 / rate, rate_stderr / (rate * rate)) } else { (f64::INFINITY, f64::INFINITY) };
    Ok(T2REstimate { t2r, t2r_stderr, rate, rate_stderr, beat, amplitudes })
}
