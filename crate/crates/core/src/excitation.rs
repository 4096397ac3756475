//! Multisine excitation: Schroeder phases, sampling, crest factor and the
//! persistent-excitation order check.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulate::{Channel, TimeSeries};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExcitationError {
    #[error("invalid band: need 0 < f_min < f_max (got {f_min}, {f_max})")]
    InvalidBand { f_min: f64, f_max: f64 },
    #[error("invalid multisine: {0}")]
    InvalidSpec(String),
    #[error("fs = {fs} Hz does not exceed twice the highest tone ({f_max} Hz)")]
    NyquistViolation { fs: f64, f_max: f64 },
    #[error("duration and sampling rate must give at least one sample (duration {duration}, fs {fs})")]
    InvalidDuration { duration: f64, fs: f64 },
    #[error("signal has zero RMS")]
    ZeroSignal,
}

/// One cosine `m cos(omega t + phase)`, `omega` in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub magnitude: f64,
    pub omega: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSineSpec {
    pub components: Vec<Tone>,
    #[serde(default)]
    pub dc_offset: f64,
}

impl MultiSineSpec {
    /// Checks the invariants; phases are wrapped into `[-pi, pi)`.
    pub fn new(components: Vec<Tone>, dc_offset: f64) -> Result<Self, ExcitationError> {
        let mut spec = Self { components, dc_offset };
        for t in spec.components.iter_mut() {
            t.phase = wrap_phase(t.phase);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ExcitationError> {
        if self.components.is_empty() {
            return Err(ExcitationError::InvalidSpec("no tones".into()));
        }
        for t in &self.components {
            if !(t.magnitude > 0.0 && t.magnitude.is_finite()) {
                return Err(ExcitationError::InvalidSpec(format!("magnitude {} must be positive", t.magnitude)));
            }
            if !(t.omega > 0.0 && t.omega.is_finite()) {
                return Err(ExcitationError::InvalidSpec(format!("frequency {} must be positive", t.omega)));
            }
            if !(-PI..PI).contains(&t.phase) {
                return Err(ExcitationError::InvalidSpec(format!("phase {} outside [-pi, pi)", t.phase)));
            }
        }
        if self.components.windows(2).any(|w| w[1].omega <= w[0].omega) {
            return Err(ExcitationError::InvalidSpec("frequencies must be strictly increasing".into()));
        }
        if !self.dc_offset.is_finite() {
            return Err(ExcitationError::InvalidSpec("dc offset must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.components.iter().map(|t| t.omega).collect()
    }

    /// Continuous-time value at `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        self.dc_offset
            + self
                .components
                .iter()
                .map(|c| c.magnitude * (c.omega * t + c.phase).cos())
                .sum::<f64>()
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_phase(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(TAU) - PI;
    // rem_euclid can round up to exactly TAU.
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

/// `phi_j = phi_1 - pi j (j - 1) / l` for `j = 1..l`, wrapped.
pub fn schroeder_phases(l: usize, phi1: f64) -> Vec<f64> {
    (1..=l)
        .map(|j| wrap_phase(phi1 - PI * (j * (j - 1)) as f64 / l as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

/// Tone grid over `[lo, hi]` inclusive, in the units given.
pub fn tone_grid(l: usize, lo: f64, hi: f64, spacing: Spacing) -> Vec<f64> {
    if l == 1 {
        return vec![lo];
    }
    let steps = (l - 1) as f64;
    (0..l)
        .map(|j| {
            let s = j as f64 / steps;
            match spacing {
                Spacing::Linear => lo + (hi - lo) * s,
                Spacing::Log => lo * (hi / lo).powf(s),
            }
        })
        .collect()
}

/// Equal-magnitude multisine with Schroeder phases over the band
/// `[f_min, f_max]` Hz.
pub fn build_multisine(
    l: usize,
    magnitude: f64,
    f_min: f64,
    f_max: f64,
    spacing: Spacing,
    phi1: f64,
) -> Result<MultiSineSpec, ExcitationError> {
    if !(f_min > 0.0 && f_min < f_max && f_max.is_finite()) {
        return Err(ExcitationError::InvalidBand { f_min, f_max });
    }
    build_multisine_rad(l, magnitude, TAU * f_min, TAU * f_max, spacing, phi1)
}

/// As [`build_multisine`] with the band given directly in rad/s.
pub fn build_multisine_rad(
    l: usize,
    magnitude: f64,
    w_min: f64,
    w_max: f64,
    spacing: Spacing,
    phi1: f64,
) -> Result<MultiSineSpec, ExcitationError> {
    if !(w_min > 0.0 && w_min < w_max && w_max.is_finite()) {
        return Err(ExcitationError::InvalidBand { f_min: w_min / TAU, f_max: w_max / TAU });
    }
    let components = tone_grid(l, w_min, w_max, spacing)
        .into_iter()
        .zip(schroeder_phases(l, phi1))
        .map(|(omega, phase)| Tone { magnitude, omega, phase })
        .collect();
    MultiSineSpec::new(components, 0.0)
}

/// Samples `u(k / fs)` for `k = 0 .. floor(duration fs) - 1`.
pub fn sample(spec: &MultiSineSpec, fs: f64, duration: f64) -> Result<TimeSeries, ExcitationError> {
    spec.validate()?;
    let f_top = spec.components.iter().fold(0.0_f64, |m, t| m.max(t.omega)) / TAU;
    if !(fs > 2.0 * f_top) {
        return Err(ExcitationError::NyquistViolation { fs, f_max: f_top });
    }
    // Tolerate representation error in duration * fs (e.g. 100 * 500).
    let count = (duration * fs * (1.0 + 1e-12)).floor();
    if !(duration > 0.0 && count >= 1.0 && count.is_finite()) {
        return Err(ExcitationError::InvalidDuration { duration, fs });
    }
    let dt = 1.0 / fs;
    let values = (0..count as usize).map(|k| spec.value_at(k as f64 * dt)).collect();
    TimeSeries::new(0.0, dt, values, Channel::Current)
        .map_err(|_| ExcitationError::InvalidDuration { duration, fs })
}

/// `max |x| / rms(x)`.
pub fn crest_factor(x: &TimeSeries) -> Result<f64, ExcitationError> {
    crest_factor_of(&x.values)
}

pub fn crest_factor_of(values: &[f64]) -> Result<f64, ExcitationError> {
    if values.is_empty() {
        return Err(ExcitationError::ZeroSignal);
    }
    let peak = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let rms = (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt();
    if rms == 0.0 {
        return Err(ExcitationError::ZeroSignal);
    }
    Ok(peak / rms)
}

/// One line of the two-sided input spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine {
    pub omega: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationReport {
    pub pe_order: usize,
    pub required_order: usize,
    /// Set when the report was built from a sampled record.
    pub crest_factor: Option<f64>,
    pub spectral_lines: Vec<SpectralLine>,
    pub passes: bool,
}

/// Number of transfer-function coefficients an order-`n` circuit needs
/// excited: `n + 2` numerator plus `n + 1` denominator coefficients.
pub fn required_pe_order(n: usize) -> usize {
    2 * n + 3
}

/// Compares the `2l` spectral lines of `spec` with the order needed for an
/// order-`n` circuit.
pub fn check_pe_order(spec: &MultiSineSpec, n: usize) -> ExcitationReport {
    let spectral_lines = spec
        .components
        .iter()
        .flat_map(|t| {
            let weight = TAU * t.magnitude * t.magnitude / 4.0;
            [
                SpectralLine { omega: -t.omega, weight },
                SpectralLine { omega: t.omega, weight },
            ]
        })
        .collect::<Vec<_>>();
    let pe_order = spectral_lines.len();
    let required_order = required_pe_order(n);
    ExcitationReport {
        pe_order,
        required_order,
        crest_factor: None,
        passes: pe_order >= required_order,
        spectral_lines,
    }
}

/// [`check_pe_order`] with the crest factor of a sampled record filled in.
pub fn excitation_report(
    spec: &MultiSineSpec,
    n: usize,
    sampled: &TimeSeries,
) -> Result<ExcitationReport, ExcitationError> {
    let mut report = check_pe_order(spec, n);
    report.crest_factor = Some(crest_factor(sampled)?);
    Ok(report)
}
