//! The reference operating point and experiment used throughout the tests,
//! examples and shipped configurations.
//!
//! Tone frequencies are read as angular frequencies: a 500 Hz tone cannot be
//! represented at the 500 Hz sampling rate, while 500 rad/s sits well below
//! Nyquist.

use crate::circuit::CircuitParams;
use crate::estimate::{FitConfig, OutlierPolicy};
use crate::excitation::{build_multisine_rad, MultiSineSpec, Spacing};
use crate::montecarlo::StudyConfig;
use crate::simulate::{Hold, NoiseSpec};

pub const FS: f64 = 500.0;
pub const DURATION: f64 = 100.0;
pub const SIGMA: f64 = 1e-4;
pub const PHI1: f64 = 1.9775;
pub const MAGNITUDE: f64 = 1e-3;
pub const TONES: usize = 4;
pub const OMEGA_MIN: f64 = 0.2;
pub const OMEGA_MAX: f64 = 500.0;
pub const TRIALS: usize = 100;

/// `R∞ = 0.05 Ω, R = (0.2, 0.4) Ω, C = (0.3, 0.6) F, Cw = 300 F`.
pub fn operating_point() -> CircuitParams<f64> {
    CircuitParams::new(0.05, vec![0.2, 0.4], vec![0.3, 0.6], 300.0).expect("valid constants")
}

/// Four log-spaced tones over the band; used for estimation studies.
pub fn study_excitation() -> MultiSineSpec {
    build_multisine_rad(TONES, MAGNITUDE, OMEGA_MIN, OMEGA_MAX, Spacing::Log, PHI1).expect("valid constants")
}

/// Four equally spaced tones over the band; the low-crest-factor design.
pub fn linear_excitation() -> MultiSineSpec {
    build_multisine_rad(TONES, MAGNITUDE, OMEGA_MIN, OMEGA_MAX, Spacing::Linear, PHI1).expect("valid constants")
}

/// The 100-trial study at the operating point, with or without output
/// noise, seeded from `master_seed`.
pub fn reference_study(noisy: bool, master_seed: u64) -> StudyConfig {
    let mut cfg = StudyConfig {
        truth: operating_point(),
        excitation: study_excitation(),
        fs: FS,
        duration: DURATION,
        noise: noisy.then_some(NoiseSpec { sigma: SIGMA, seed: 0 }),
        trials: TRIALS,
        fit: FitConfig { order_n: 2, hold: Some(Hold::Foh), ..Default::default() },
        outliers: OutlierPolicy::default(),
        sim_hold: Hold::Foh,
    };
    cfg.set_master_seed(master_seed);
    cfg
}
