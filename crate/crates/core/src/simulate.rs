//! Time-domain simulation of the diagonal state-space model, noise
//! injection, detrending and CSV persistence of sampled records.
//!
//! Because `A` is diagonal every state is a scalar first-order system and
//! the discretisation is exact for the assumed inter-sample input. Two
//! holds are available: zero-order (piecewise constant) and first-order
//! (piecewise linear between samples).

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{CircuitParams, StateSpaceModel};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid time series: {0}")]
    InvalidSeries(String),
    #[error("initial state has length {got}, expected {expected}")]
    StateLength { expected: usize, got: usize },
    #[error("noise standard deviation must be finite and non-negative (got {0})")]
    InvalidNoise(f64),
    #[error("input and output records differ: {0}")]
    Mismatch(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Current,
    Voltage,
}

/// Uniformly sampled record starting at `t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    pub channel: Channel,
}

impl TimeSeries {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>, channel: Channel) -> Result<Self, SimError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SimError::InvalidSeries(format!("dt must be positive (got {dt})")));
        }
        if values.is_empty() {
            return Err(SimError::InvalidSeries("no samples".into()));
        }
        Ok(Self { t0, dt, values, channel })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        self.values.len() as f64 * self.dt
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Additive white Gaussian output noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

/// Inter-sample input assumption used by the discretisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hold {
    /// Input held constant over each sample interval.
    Zoh,
    /// Input interpolated linearly between consecutive samples.
    #[default]
    Foh,
}

/// `(1 - e^{-x}) / x`, continuous at 0.
pub fn phi1(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0 + x.powi(4) / 120.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// `(x - 1 + e^{-x}) / x^2`, continuous at 0.
pub fn phi2(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0 + x.powi(4) / 720.0
    } else {
        (x + (-x).exp_m1()) / (x * x)
    }
}

/// Per-state update weights: `x+ = e x + w0 u_k + w1 u_{k+1}`.
#[derive(Debug, Clone, Copy)]
struct StateStep {
    e: f64,
    w0: f64,
    w1: f64,
}

fn state_step(pole: f64, gain: f64, dt: f64, hold: Hold) -> StateStep {
    // pole is the diagonal entry of A, i.e. -a (or 0 for the integrator).
    let x = -pole * dt;
    let e = (-x).exp();
    let p1 = phi1(x);
    match hold {
        Hold::Zoh => StateStep { e, w0: gain * dt * p1, w1: 0.0 },
        Hold::Foh => {
            let p2 = phi2(x);
            StateStep {
                e,
                w0: gain * dt * (p1 - p2),
                w1: gain * dt * p2,
            }
        }
    }
}

/// Zero-order-hold simulation from state `x0` (zero when `None`).
pub fn simulate_response(
    ss: &StateSpaceModel<f64>,
    u: &TimeSeries,
    x0: Option<&[f64]>,
) -> Result<TimeSeries, SimError> {
    simulate_response_with_hold(ss, u, x0, Hold::Zoh)
}

/// Exact discretisation under the chosen hold. `y_k = C x_k + D u_k`.
pub fn simulate_response_with_hold(
    ss: &StateSpaceModel<f64>,
    u: &TimeSeries,
    x0: Option<&[f64]>,
    hold: Hold,
) -> Result<TimeSeries, SimError> {
    let dim = ss.a_diag.len();
    let mut x = match x0 {
        Some(v) if v.len() != dim => {
            return Err(SimError::StateLength { expected: dim, got: v.len() })
        }
        Some(v) => v.to_vec(),
        None => vec![0.0; dim],
    };
    let steps: Vec<StateStep> = ss
        .a_diag
        .iter()
        .zip(&ss.b_vec)
        .map(|(&p, &g)| state_step(p, g, u.dt, hold))
        .collect();

    let n = u.len();
    let mut y = Vec::with_capacity(n);
    for k in 0..n {
        let uk = u.values[k];
        let out: f64 = x.iter().zip(&ss.c_vec).map(|(xi, ci)| xi * ci).sum();
        y.push(out + ss.d_scalar * uk);
        if k + 1 < n {
            let un = u.values[k + 1];
            for (xi, st) in x.iter_mut().zip(&steps) {
                *xi = st.e * *xi + st.w0 * uk + st.w1 * un;
            }
        }
    }
    TimeSeries::new(u.t0, u.dt, y, Channel::Voltage)
}

/// Adds iid `N(0, sigma^2)` samples drawn from a ChaCha8 stream seeded with
/// `noise.seed`.
pub fn add_noise(y: &TimeSeries, noise: &NoiseSpec) -> Result<TimeSeries, SimError> {
    if !(noise.sigma >= 0.0 && noise.sigma.is_finite()) {
        return Err(SimError::InvalidNoise(noise.sigma));
    }
    let mut out = y.clone();
    if noise.sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, noise.sigma).map_err(|_| SimError::InvalidNoise(noise.sigma))?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    for v in out.values.iter_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(out)
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Subtracts the sample mean. A second pass removes the rounding residue
/// of the first.
pub fn detrend(x: &TimeSeries) -> TimeSeries {
    let mut out = x.clone();
    for _ in 0..2 {
        let m = mean(&out.values);
        out.values.iter_mut().for_each(|v| *v -= m);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingWarning {
    /// `fs` is less than five times `1/tau_min`.
    SlowSampling { fs: f64, inv_tau_min: f64 },
    /// Record shorter than six times the slowest time constant.
    ShortRecord { duration: f64, tau_max: f64 },
}

/// Slowest time constant: the RC pairs and the `R∞ Cw` product.
pub fn tau_max(p: &CircuitParams<f64>) -> f64 {
    p.time_constants()
        .into_iter()
        .fold(p.r_inf * p.c_w, f64::max)
}

pub fn tau_min(p: &CircuitParams<f64>) -> f64 {
    p.time_constants().into_iter().fold(f64::INFINITY, f64::min)
}

/// Rule-of-thumb checks on the sampling rate and record length. These are
/// advisory only.
pub fn sampling_diagnostics(p: &CircuitParams<f64>, fs: f64, duration: f64) -> Vec<SamplingWarning> {
    let mut warnings = Vec::new();
    let t_min = tau_min(p);
    if t_min.is_finite() && fs < 5.0 / t_min {
        warnings.push(SamplingWarning::SlowSampling { fs, inv_tau_min: 1.0 / t_min });
    }
    let t_max = tau_max(p);
    if duration < 6.0 * t_max {
        warnings.push(SamplingWarning::ShortRecord { duration, tau_max: t_max });
    }
    for w in &warnings {
        log::warn!("sampling diagnostic: {w:?}");
    }
    warnings
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    t: String,
    u: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    y: Option<String>,
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `t,u,y` (or `t,u` when `y` is `None`) with 17 significant digits.
pub fn write_csv<W: Write>(w: W, u: &TimeSeries, y: Option<&TimeSeries>) -> Result<(), SimError> {
    if let Some(y) = y {
        if y.len() != u.len() || y.dt != u.dt || y.t0 != u.t0 {
            return Err(SimError::Mismatch("time grids differ".into()));
        }
    }
    let mut wtr = csv::Writer::from_writer(w);
    for k in 0..u.len() {
        wtr.serialize(Row {
            t: fmt17(u.time(k)),
            u: fmt17(u.values[k]),
            y: y.map(|y| fmt17(y.values[k])),
        })?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a record written by [`write_csv`]. `dt` is taken from the first two
/// time stamps.
pub fn read_csv<R: Read>(r: R) -> Result<(TimeSeries, Option<TimeSeries>), SimError> {
    let mut rdr = csv::Reader::from_reader(r);
    let (mut t, mut u, mut y) = (Vec::new(), Vec::new(), Vec::new());
    let mut has_y = true;
    for row in rdr.deserialize::<Row>() {
        let row = row?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| SimError::InvalidSeries(format!("bad number {s:?}: {e}")))
        };
        t.push(parse(&row.t)?);
        u.push(parse(&row.u)?);
        match row.y {
            Some(v) => y.push(parse(&v)?),
            None => has_y = false,
        }
    }
    if t.len() < 2 {
        return Err(SimError::InvalidSeries("need at least two rows".into()));
    }
    let dt = t[1] - t[0];
    let u = TimeSeries::new(t[0], dt, u, Channel::Current)?;
    let y = if has_y {
        Some(TimeSeries::new(t[0], dt, y, Channel::Voltage)?)
    } else {
        None
    };
    Ok((u, y))
}
