//! Transfer-function estimation from sampled multisine records and recovery
//! of circuit parameters from the fitted coefficients.
//!
//! The pipeline is: extract input and output phasors at the excitation
//! tones, form `H = Y / U`, fit a monic transfer function with one pole
//! pinned at the origin by weighted nonlinear least squares, then invert the
//! coefficient map.
//!
//! The fitted model can be the continuous-time `T(jω)` itself or the
//! sampled-data model `T_h` the data actually follow under a given input
//! hold. For a pole `p` with residue `r`, `z = e^{jω dt}` and
//! `e = e^{p dt}`:
//!
//! ```text
//! ZOH: r dt φ1(x) / (z - e)
//! FOH: r dt ((φ1(x) - φ2(x)) + φ2(x) z) / (z - e),   x = -p dt
//! ```
//!
//! plus the feedthrough. Fitting `T_h` removes the discretisation bias that
//! a continuous fit would absorb into the coefficients.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{expand_partial_fractions, CircuitParams, RationalTf, DUPLICATE_POLE_TOL};
use crate::excitation::required_pe_order;
use crate::identifiability::{residues_for_poles, REAL_ROOT_TOL};
use crate::lm::{self, LmOptions};
use crate::poly;
use crate::simulate::{Hold, TimeSeries};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("record of {duration} s is shorter than two periods of the slowest tone ({needed} s)")]
    TooShortRecord { duration: f64, needed: f64 },
    #[error("{lines} spectral lines cannot excite the {required} coefficients of an order-{n} model")]
    RankDeficient { lines: usize, required: usize, n: usize },
    #[error("input and output records are on different time grids")]
    GridMismatch,
    #[error("input has no energy at {0} rad/s")]
    NoInputAtTone(f64),
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error("initial model is undefined at the fit frequencies")]
    BadInitialGuess,
}

/// `(2/N) sum x[k] e^{-jω t_k}` at each `ω` (rad/s).
pub fn dft_at_tones(x: &TimeSeries, freqs: &[f64]) -> Result<Vec<Complex64>, EstimateError> {
    check_record(x.duration(), freqs)?;
    let scale = 2.0 / x.len() as f64;
    Ok(freqs
        .iter()
        .map(|&w| {
            let acc: Complex64 = x
                .values
                .iter()
                .enumerate()
                .map(|(k, v)| Complex64::from_polar(*v, -w * x.time(k)))
                .sum();
            acc * scale
        })
        .collect())
}

fn check_record(duration: f64, freqs: &[f64]) -> Result<(), EstimateError> {
    let w_min = freqs.iter().copied().fold(f64::INFINITY, f64::min);
    if freqs.is_empty() || !(w_min > 0.0) {
        return Err(EstimateError::InvalidConfig("tone frequencies must be positive".into()));
    }
    let needed = 2.0 * TAU / w_min;
    if duration < needed {
        return Err(EstimateError::TooShortRecord { duration, needed });
    }
    Ok(())
}

/// Least-squares phasors: fits `c + sum (α_j cos ω_j t + β_j sin ω_j t)` to
/// the samples from `skip` onward and returns `α_j - jβ_j`, so that
/// `m cos(ωt + φ)` maps to `m e^{jφ}`. Unlike [`dft_at_tones`] this has no
/// leakage between tones or from a DC offset.
pub fn tone_phasors(x: &TimeSeries, freqs: &[f64], skip: usize) -> Result<Vec<Complex64>, EstimateError> {
    let used = x.len().saturating_sub(skip);
    check_record(used as f64 * x.dt, freqs)?;
    let cols = 1 + 2 * freqs.len();
    // Normal equations accumulated row by row; the columns are close to
    // orthogonal over several periods.
    let mut ata = DMatrix::<f64>::zeros(cols, cols);
    let mut atb = DVector::<f64>::zeros(cols);
    let mut row = vec![0.0; cols];
    for k in skip..x.len() {
        let t = x.time(k);
        row[0] = 1.0;
        for (j, w) in freqs.iter().enumerate() {
            let (s, c) = (w * t).sin_cos();
            row[1 + 2 * j] = c;
            row[2 + 2 * j] = s;
        }
        for i in 0..cols {
            atb[i] += row[i] * x.values[k];
            for j in i..cols {
                ata[(i, j)] += row[i] * row[j];
            }
        }
    }
    for i in 0..cols {
        for j in 0..i {
            ata[(i, j)] = ata[(j, i)];
        }
    }
    let coef = ata
        .cholesky()
        .map(|c| c.solve(&atb))
        .ok_or_else(|| EstimateError::InvalidConfig("tones are not separable on this record".into()))?;
    Ok((0..freqs.len())
        .map(|j| Complex64::new(coef[1 + 2 * j], -coef[2 + 2 * j]))
        .collect())
}

/// Empirical frequency response at the tones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyData {
    pub omegas: Vec<f64>,
    pub response: Vec<Complex64>,
    pub dt: f64,
}

/// `H(ω_q) = Y(ω_q) / U(ω_q)` from the samples after `settle_time`.
pub fn empirical_response(
    u: &TimeSeries,
    y: &TimeSeries,
    freqs: &[f64],
    settle_time: f64,
) -> Result<FrequencyData, EstimateError> {
    if u.len() != y.len() || u.dt != y.dt || u.t0 != y.t0 {
        return Err(EstimateError::GridMismatch);
    }
    let skip = (settle_time.max(0.0) / u.dt).round() as usize;
    let uu = tone_phasors(u, freqs, skip)?;
    let yy = tone_phasors(y, freqs, skip)?;
    let scale = uu.iter().fold(0.0_f64, |m, v| m.max(v.norm()));
    let mut response = Vec::with_capacity(freqs.len());
    for ((w, un), yn) in freqs.iter().zip(&uu).zip(&yy) {
        if un.norm() <= 1e-9 * scale || scale == 0.0 {
            return Err(EstimateError::NoInputAtTone(*w));
        }
        response.push(yn / un);
    }
    Ok(FrequencyData { omegas: freqs.to_vec(), response, dt: u.dt })
}

fn phi1c(x: Complex64) -> Complex64 {
    if x.norm() < 1e-3 {
        1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0 + x.powi(4) / 120.0
    } else {
        (1.0 - (-x).exp()) / x
    }
}

fn phi2c(x: Complex64) -> Complex64 {
    if x.norm() < 1e-3 {
        0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0 + x.powi(4) / 720.0
    } else {
        (x - 1.0 + (-x).exp()) / (x * x)
    }
}

/// Response of `1/(s - pole)` as seen through the chosen model at `ω`.
fn pole_kernel(pole: Complex64, omega: f64, dt: f64, hold: Option<Hold>) -> Complex64 {
    let Some(hold) = hold else {
        return 1.0 / (Complex64::new(0.0, omega) - pole);
    };
    let z = Complex64::from_polar(1.0, omega * dt);
    let x = -pole * dt;
    let e = (pole * dt).exp();
    let p1 = phi1c(x);
    let num = match hold {
        Hold::Zoh => p1,
        Hold::Foh => {
            let p2 = phi2c(x);
            (p1 - p2) + p2 * z
        }
    };
    num * dt / (z - e)
}

/// Frequency response of `tf` (integrator pinned) under the model: the
/// continuous `T(jω)` when `hold` is `None`, else the sampled-data response
/// for sample interval `dt`. `None` if the model is undefined there.
pub fn model_response(
    tf: &RationalTf<f64>,
    omegas: &[f64],
    dt: f64,
    hold: Option<Hold>,
) -> Option<Vec<Complex64>> {
    let n = tf.den.len().checked_sub(1)?;
    if tf.num.len() != n + 2 {
        return None;
    }
    let out: Vec<Complex64> = match hold {
        None => omegas
            .iter()
            .map(|&w| {
                let s = Complex64::new(0.0, w);
                poly::eval_complex(&tf.num, s) / poly::eval_monic_complex(&tf.den, s)
            })
            .collect(),
        Some(_) => {
            // Poles: the origin plus the roots of D(s)/s.
            let mut poles = vec![Complex64::new(0.0, 0.0)];
            poles.extend(poly::monic_roots(&tf.den[1..]));
            let lead = tf.num[n + 1];
            let residues: Vec<Complex64> = poles
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let dprime: Complex64 = poles
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, &q)| p - q)
                        .product();
                    let strictly_proper =
                        poly::eval_complex(&tf.num, p) - lead * poly::eval_monic_complex(&tf.den, p);
                    strictly_proper / dprime
                })
                .collect();
            omegas
                .iter()
                .map(|&w| {
                    poles
                        .iter()
                        .zip(&residues)
                        .map(|(&p, &r)| r * pole_kernel(p, w, dt, hold))
                        .sum::<Complex64>()
                        + lead
                })
                .collect()
        }
    };
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// How the residues of the starting point are chosen once the random poles
/// are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Weighted linear least squares for residues and feedthrough given the
    /// poles.
    #[default]
    LsResidues,
    /// Residues and feedthrough log-uniform over `residue_log_range`.
    RandomResidues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub order_n: usize,
    pub max_iter: usize,
    pub init_seed: u64,
    /// Decades for the random poles.
    pub init_log_range: (f64, f64),
    /// Decades for random residues under [`InitStrategy::RandomResidues`].
    pub residue_log_range: (f64, f64),
    pub convergence_tol: f64,
    /// Fit frequencies in rad/s; the excitation tones when `None`.
    pub freqs: Option<Vec<f64>>,
    /// Sampled-data model under this hold, or continuous `T(jω)` if `None`.
    pub hold: Option<Hold>,
    /// Samples before this time are excluded from phasor extraction.
    pub settle_time: f64,
    pub init: InitStrategy,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            order_n: 2,
            max_iter: 200,
            init_seed: 0,
            init_log_range: (-2.0, 3.0),
            residue_log_range: (-4.0, 2.0),
            convergence_tol: 1e-12,
            freqs: None,
            hold: Some(Hold::Foh),
            settle_time: 5.0,
            init: InitStrategy::LsResidues,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), EstimateError> {
        let bad = |m: &str| Err(EstimateError::InvalidConfig(m.into()));
        if self.order_n == 0 {
            return bad("order_n must be at least 1");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1");
        }
        let ordered = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 < r.1;
        if !ordered(self.init_log_range) || !ordered(self.residue_log_range) {
            return bad("log ranges need lower < upper");
        }
        if !(self.convergence_tol >= 0.0) {
            return bad("convergence_tol must be non-negative");
        }
        if !(self.settle_time >= 0.0) {
            return bad("settle_time must be non-negative");
        }
        Ok(())
    }
}

/// Outcome of the coefficient fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfFit {
    pub tf: RationalTf<f64>,
    /// `sum r^2` of the relative residuals.
    pub residual: f64,
    /// Root-mean-square relative residual per real equation.
    pub rms_error: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Starting coefficients `(f_0..f_{n+1}, g_1..g_n)`.
    pub init: Vec<f64>,
}

/// Free coefficients `(f_0..f_{n+1}, g_1..g_n)` of a pinned-integrator TF.
pub fn free_coefficients(tf: &RationalTf<f64>) -> Vec<f64> {
    let mut v = tf.num.clone();
    v.extend_from_slice(&tf.den[1..]);
    v
}

/// Inverse of [`free_coefficients`].
pub fn tf_from_free(p: &[f64], n: usize) -> RationalTf<f64> {
    let mut den = vec![0.0];
    den.extend_from_slice(&p[n + 2..]);
    RationalTf { num: p[..n + 2].to_vec(), den, integrator_fixed: true }
}

fn relative_residuals(model: &[Complex64], data: &[Complex64]) -> Vec<f64> {
    let e: Vec<Complex64> = model.iter().zip(data).map(|(m, h)| (m - h) / h.norm()).collect();
    e.iter().map(|v| v.re).chain(e.iter().map(|v| v.im)).collect()
}

fn check_rank(lines: usize, n: usize) -> Result<(), EstimateError> {
    let required = required_pe_order(n);
    if lines < required {
        return Err(EstimateError::RankDeficient { lines, required, n });
    }
    Ok(())
}

/// Draws the random starting point for `cfg.init_seed`.
pub fn initial_guess(data: &FrequencyData, cfg: &FitConfig) -> Result<Vec<f64>, EstimateError> {
    let n = cfg.order_n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
    let (lo, hi) = cfg.init_log_range;
    let a: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(lo..hi))).collect();
    let (b, b_w, d) = match cfg.init {
        InitStrategy::RandomResidues => {
            let (lo, hi) = cfg.residue_log_range;
            let mut draw = || 10f64.powf(rng.random_range(lo..hi));
            let b: Vec<f64> = (0..n).map(|_| draw()).collect();
            (b, draw(), draw())
        }
        InitStrategy::LsResidues => ls_residues(data, &a, cfg.hold).ok_or(EstimateError::BadInitialGuess)?,
    };
    Ok(free_coefficients(&expand_partial_fractions(&a, &b, Some(&b_w), &d)))
}

/// Residues, integrator gain and feedthrough minimising the weighted
/// residual for fixed poles `-a`. Linear in the unknowns.
fn ls_residues(data: &FrequencyData, a: &[f64], hold: Option<Hold>) -> Option<(Vec<f64>, f64, f64)> {
    let n = a.len();
    let q = data.omegas.len();
    let mut m = DMatrix::<f64>::zeros(2 * q, n + 2);
    let mut rhs = DVector::<f64>::zeros(2 * q);
    for (row, (&w, h)) in data.omegas.iter().zip(&data.response).enumerate() {
        let scale = h.norm();
        let mut basis: Vec<Complex64> = a
            .iter()
            .map(|&ai| pole_kernel(Complex64::new(-ai, 0.0), w, data.dt, hold))
            .collect();
        basis.push(pole_kernel(Complex64::new(0.0, 0.0), w, data.dt, hold));
        basis.push(Complex64::new(1.0, 0.0));
        for (col, v) in basis.iter().enumerate() {
            m[(row, col)] = v.re / scale;
            m[(row + q, col)] = v.im / scale;
        }
        rhs[row] = h.re / scale;
        rhs[row + q] = h.im / scale;
    }
    let x = m.svd(true, true).solve(&rhs, 1e-14).ok()?;
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((x.iter().take(n).copied().collect(), x[n], x[n + 1]))
}

/// Fits from the random start drawn for `cfg.init_seed`.
pub fn fit_frequency_response(data: &FrequencyData, cfg: &FitConfig) -> Result<TfFit, EstimateError> {
    cfg.validate()?;
    check_rank(2 * data.omegas.len(), cfg.order_n)?;
    let p0 = initial_guess(data, cfg)?;
    fit_frequency_response_from(data, cfg, &p0)
}

/// Fits from the given free coefficients `(f_0..f_{n+1}, g_1..g_n)`.
pub fn fit_frequency_response_from(
    data: &FrequencyData,
    cfg: &FitConfig,
    p0: &[f64],
) -> Result<TfFit, EstimateError> {
    cfg.validate()?;
    let n = cfg.order_n;
    check_rank(2 * data.omegas.len(), n)?;
    if p0.len() != 2 * n + 2 {
        return Err(EstimateError::InvalidConfig(format!(
            "start vector has {} entries, expected {}",
            p0.len(),
            2 * n + 2
        )));
    }
    let residuals = |p: &[f64]| {
        let model = model_response(&tf_from_free(p, n), &data.omegas, data.dt, cfg.hold)?;
        Some(relative_residuals(&model, &data.response))
    };
    let opts = LmOptions { max_iter: cfg.max_iter, tol: cfg.convergence_tol, ..Default::default() };
    let out = lm::minimize(residuals, p0, &opts).ok_or(EstimateError::BadInitialGuess)?;
    let equations = 2 * data.omegas.len();
    Ok(TfFit {
        tf: tf_from_free(&out.params, n),
        residual: out.cost,
        rms_error: (out.cost / equations as f64).sqrt(),
        iterations: out.iterations,
        converged: out.converged,
        init: p0.to_vec(),
    })
}

/// Full fit from time-domain records: phasors after `cfg.settle_time`, then
/// [`fit_frequency_response`].
pub fn fit_tf(u: &TimeSeries, y: &TimeSeries, tones: &[f64], cfg: &FitConfig) -> Result<TfFit, EstimateError> {
    cfg.validate()?;
    let freqs = cfg.freqs.as_deref().unwrap_or(tones);
    check_rank(2 * freqs.len(), cfg.order_n)?;
    let data = empirical_response(u, y, freqs, cfg.settle_time)?;
    fit_frequency_response(&data, cfg)
}

/// Why a trial was discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    ComplexPoles,
    NegativePoles,
    SingularSystem,
    NonPositiveElement,
    CwBound,
    CiBound,
    NoConvergence,
    FitError,
    /// The optimiser could not start (undefined model at the initial guess).
    FitFailed,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RejectReason::ComplexPoles => "complex poles",
            RejectReason::NegativePoles => "poles in the closed right half-plane",
            RejectReason::SingularSystem => "coincident poles",
            RejectReason::NonPositiveElement => "non-positive element value",
            RejectReason::CwBound => "Cw above bound",
            RejectReason::CiBound => "C_i above bound",
            RejectReason::NoConvergence => "iteration limit reached",
            RejectReason::FitError => "fit error above threshold",
            RejectReason::FitFailed => "fit could not start",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecoverError {
    #[error("rejected: {0}")]
    Rejected(RejectReason),
    #[error("transfer function shape does not match: {0}")]
    Shape(String),
}

impl From<RejectReason> for RecoverError {
    fn from(r: RejectReason) -> Self {
        RecoverError::Rejected(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierPolicy {
    pub c_w_max: f64,
    pub c_i_max: f64,
    /// When `false`, poles are taken as `-Re(p)` without checking that they
    /// are real and stable; anything non-physical then shows up as a
    /// non-positive element.
    pub require_real_positive_poles: bool,
    /// Largest accepted RMS relative fit residual.
    pub max_fit_error: f64,
}

impl Default for OutlierPolicy {
    fn default() -> Self {
        Self { c_w_max: 1000.0, c_i_max: 10.0, require_real_positive_poles: true, max_fit_error: 0.02 }
    }
}

fn real_poles(lower: &[f64], strict: bool) -> Result<Vec<f64>, RejectReason> {
    let roots = poly::monic_roots(lower);
    if strict && roots.iter().any(|z| z.im.abs() / (1.0 + z.re.abs()) >= REAL_ROOT_TOL) {
        return Err(RejectReason::ComplexPoles);
    }
    let a: Vec<f64> = roots.iter().map(|z| -z.re).collect();
    if strict && a.iter().any(|&v| !(v > 0.0)) {
        return Err(RejectReason::NegativePoles);
    }
    Ok(a)
}

fn check_shape(tf: &RationalTf<f64>, n: usize) -> Result<(), RecoverError> {
    if tf.num.len() != n + 2 || tf.den.len() != n + 1 {
        return Err(RecoverError::Shape(format!(
            "expected orders ({}, {}), got ({}, {})",
            n + 1,
            n + 1,
            tf.num.len().saturating_sub(1),
            tf.den.len()
        )));
    }
    if tf.den[0] != 0.0 {
        return Err(RecoverError::Shape("d_0 must be zero".into()));
    }
    Ok(())
}

/// Circuit parameters from a pinned-integrator TF of order `n`, with the RC
/// pairs ordered by decreasing `a_i` (largest pole first).
pub fn recover_params(
    tf: &RationalTf<f64>,
    n: usize,
    policy: &OutlierPolicy,
) -> Result<CircuitParams<f64>, RecoverError> {
    check_shape(tf, n)?;
    let mut a = real_poles(&tf.den[1..], policy.require_real_positive_poles)?;
    a.sort_by(|x, y| y.total_cmp(x));
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if a.windows(2).any(|w| (w[0] - w[1]).abs() < DUPLICATE_POLE_TOL * scale) {
        return Err(RejectReason::SingularSystem.into());
    }
    let (b, b_w, d) = residues_for_poles(&tf.num, &a).ok_or(RejectReason::SingularSystem)?;
    let positive = |v: &f64| *v > 0.0 && v.is_finite();
    if !(a.iter().all(positive) && b.iter().all(positive) && positive(&b_w) && positive(&d)) {
        return Err(RejectReason::NonPositiveElement.into());
    }
    let c: Vec<f64> = b.iter().map(|v| 1.0 / v).collect();
    let r: Vec<f64> = a.iter().zip(&b).map(|(ai, bi)| bi / ai).collect();
    let c_w = 1.0 / b_w;
    if c_w > policy.c_w_max {
        return Err(RejectReason::CwBound.into());
    }
    if c.iter().any(|&ci| ci > policy.c_i_max) {
        return Err(RejectReason::CiBound.into());
    }
    Ok(CircuitParams { r_inf: d, r, c, c_w })
}

/// The four common circuit topologies, named by their elements in series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    /// `R∞ - R1||C1`
    #[serde(rename = "R_RC")]
    RRc,
    /// `R∞ - R1||C1 - Cw`
    #[serde(rename = "R_RC_C")]
    RRcC,
    /// `R∞ - R1||C1 - R2||C2`
    #[serde(rename = "R_RC_RC")]
    RRcRc,
    /// `R∞ - R1||C1 - R2||C2 - Cw`
    #[serde(rename = "R_RC_RC_C")]
    RRcRcC,
}

impl Topology {
    pub fn order(self) -> usize {
        match self {
            Topology::RRc | Topology::RRcC => 1,
            Topology::RRcRc | Topology::RRcRcC => 2,
        }
    }

    pub fn has_integrator(self) -> bool {
        matches!(self, Topology::RRcC | Topology::RRcRcC)
    }
}

/// Element values for a topology; `c_w` is absent without an integrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyParams {
    pub r_inf: f64,
    pub r: Vec<f64>,
    pub c: Vec<f64>,
    pub c_w: Option<f64>,
}

fn solve2(m: [[f64; 2]; 2], rhs: [f64; 2]) -> Result<[f64; 2], RejectReason> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 || !det.is_finite() {
        return Err(RejectReason::SingularSystem);
    }
    Ok([
        (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det,
        (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det,
    ])
}

/// Closed-form inverse for each of the four named topologies. Coefficients
/// are `f_k` (numerator) and `g_k` (denominator, monic, ascending).
pub fn recover_params_topology(tf: &RationalTf<f64>, topology: Topology) -> Result<TopologyParams, RecoverError> {
    let n = topology.order();
    let (k1, k2) = tf.orders();
    let expect_k1 = if topology.has_integrator() { n + 1 } else { n };
    let expect_k2 = expect_k1;
    if k1 != expect_k1 || k2 != expect_k2 {
        return Err(RecoverError::Shape(format!(
            "{topology:?} needs orders ({expect_k1}, {expect_k2}), got ({k1}, {k2})"
        )));
    }
    if topology.has_integrator() && tf.den[0] != 0.0 {
        return Err(RecoverError::Shape("g_0 must be zero".into()));
    }
    let f = &tf.num;
    let g = &tf.den;
    let (r_inf, a, b, b_w) = match topology {
        Topology::RRc => {
            let a1 = g[0];
            (f[1], vec![a1], vec![f[0] - a1 * f[1]], None)
        }
        Topology::RRcC => {
            let a1 = g[1];
            let [b1, bw] = solve2([[1.0, 1.0], [0.0, a1]], [f[1] - a1 * f[2], f[0]])?;
            (f[2], vec![a1], vec![b1], Some(bw))
        }
        Topology::RRcRc => {
            let (a1, a2) = two_poles(g[0], g[1])?;
            let [b1, b2] = solve2(
                [[1.0, 1.0], [a2, a1]],
                [f[1] - (a1 + a2) * f[2], f[0] - a1 * a2 * f[2]],
            )?;
            (f[2], vec![a1, a2], vec![b1, b2], None)
        }
        Topology::RRcRcC => {
            let (a1, a2) = two_poles(g[1], g[2])?;
            let m = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, a2, a1, a1 + a2, 0.0, 0.0, a1 * a2]);
            let rhs = DVector::from_vec(vec![f[2] - (a1 + a2) * f[3], f[1] - a1 * a2 * f[3], f[0]]);
            let x = m.lu().solve(&rhs).ok_or(RejectReason::SingularSystem)?;
            (f[3], vec![a1, a2], vec![x[0], x[1]], Some(x[2]))
        }
    };
    let positive = |v: &f64| *v > 0.0 && v.is_finite();
    if !(positive(&r_inf) && a.iter().all(positive) && b.iter().all(positive) && b_w.as_ref().is_none_or(positive)) {
        return Err(RejectReason::NonPositiveElement.into());
    }
    Ok(TopologyParams {
        r_inf,
        r: a.iter().zip(&b).map(|(ai, bi)| bi / ai).collect(),
        c: b.iter().map(|bi| 1.0 / bi).collect(),
        c_w: b_w.map(|v| 1.0 / v),
    })
}

/// Roots of `s^2 + g1 s + g0` as `(a1, a2)` with `a1 > a2 > 0`.
fn two_poles(g0: f64, g1: f64) -> Result<(f64, f64), RejectReason> {
    let disc = g1 * g1 - 4.0 * g0;
    if disc < 0.0 {
        return Err(RejectReason::ComplexPoles);
    }
    if disc == 0.0 {
        return Err(RejectReason::SingularSystem);
    }
    // Numerically stable pair: q = (g1 + sign(g1) sqrt(disc)) / 2.
    let q = 0.5 * (g1 + g1.signum() * disc.sqrt());
    let (x, y) = (q, g0 / q);
    let (a1, a2) = if x > y { (x, y) } else { (y, x) };
    if !(a2 > 0.0) {
        return Err(RejectReason::NegativePoles);
    }
    Ok((a1, a2))
}

/// Record for a trial whose fit never started.
pub fn failed_trial(index: usize, seed: u64, noise_seed: Option<u64>) -> TrialResult {
    TrialResult {
        index,
        accepted: false,
        reject_reason: Some(RejectReason::FitFailed),
        params: None,
        tf: None,
        residual: None,
        rms_error: None,
        seed,
        noise_seed,
        init: Vec::new(),
        iterations: 0,
    }
}

/// One Monte Carlo trial: fit plus recovery plus the outlier policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    pub accepted: bool,
    pub reject_reason: Option<RejectReason>,
    pub params: Option<CircuitParams<f64>>,
    pub tf: Option<RationalTf<f64>>,
    pub residual: Option<f64>,
    pub rms_error: Option<f64>,
    /// Seed of the random initial guess.
    pub seed: u64,
    /// Seed of the measurement noise, if any was added.
    pub noise_seed: Option<u64>,
    pub init: Vec<f64>,
    pub iterations: usize,
}

/// Applies recovery and the outlier policy to a finished fit.
pub fn judge_fit(
    fit: TfFit,
    n: usize,
    policy: &OutlierPolicy,
    index: usize,
    seed: u64,
    noise_seed: Option<u64>,
) -> TrialResult {
    let outcome = if !fit.converged {
        Err(RejectReason::NoConvergence)
    } else {
        match recover_params(&fit.tf, n, policy) {
            Ok(_) if !(fit.rms_error <= policy.max_fit_error) => Err(RejectReason::FitError),
            Ok(p) => Ok(p),
            Err(RecoverError::Rejected(r)) => Err(r),
            Err(RecoverError::Shape(_)) => Err(RejectReason::SingularSystem),
        }
    };
    let (params, reject_reason) = match outcome {
        Ok(p) => (Some(p), None),
        Err(r) => (None, Some(r)),
    };
    TrialResult {
        index,
        accepted: params.is_some(),
        reject_reason,
        params,
        tf: Some(fit.tf),
        residual: Some(fit.residual),
        rms_error: Some(fit.rms_error),
        seed,
        noise_seed,
        init: fit.init,
        iterations: fit.iterations,
    }
}
