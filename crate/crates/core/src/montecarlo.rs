//! Repeated-trial estimation studies.
//!
//! The input record and the noise-free response are computed once. Each
//! trial `i` then draws its own starting point from `fit.init_seed + i` and,
//! when noise is configured, its own noise realisation from
//! `noise.seed + i`. Trials run in parallel and are collected in index
//! order, so results do not depend on the thread count.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{parameter_names, to_modal, to_state_space, CircuitError, CircuitParams};
use crate::estimate::{
    empirical_response, failed_trial, fit_frequency_response, judge_fit, EstimateError, FitConfig,
    FrequencyData, OutlierPolicy, RejectReason, TrialResult,
};
use crate::excitation::{check_pe_order, sample, ExcitationError, MultiSineSpec};
use crate::simulate::{add_noise, simulate_response_with_hold, Hold, NoiseSpec, SimError, TimeSeries};

/// Offset between the master seed and the first noise seed.
pub const NOISE_SEED_OFFSET: u64 = 1_000_003;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("invalid study configuration: {0}")]
    InvalidConfig(String),
    #[error("excitation provides {provided} spectral lines, the model needs {required}")]
    InsufficientExcitation { provided: usize, required: usize },
    #[error("no trial was accepted")]
    NoAcceptedTrials,
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Excitation(#[from] ExcitationError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub truth: CircuitParams<f64>,
    pub excitation: MultiSineSpec,
    pub fs: f64,
    pub duration: f64,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    pub trials: usize,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub outliers: OutlierPolicy,
    /// Inter-sample input assumption of the simulated plant.
    #[serde(default)]
    pub sim_hold: Hold,
}

impl StudyConfig {
    /// Sets the initial-guess seed to `seed` and the noise seed to
    /// `seed + NOISE_SEED_OFFSET`.
    pub fn set_master_seed(&mut self, seed: u64) {
        self.fit.init_seed = seed;
        if let Some(noise) = self.noise.as_mut() {
            noise.seed = seed.wrapping_add(NOISE_SEED_OFFSET);
        }
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        self.truth.validate()?;
        self.excitation.validate()?;
        self.fit.validate()?;
        if self.trials == 0 {
            return Err(StudyError::InvalidConfig("trials must be at least 1".into()));
        }
        if self.fit.order_n != self.truth.order() {
            return Err(StudyError::InvalidConfig(format!(
                "fit order {} differs from the order {} of the true circuit",
                self.fit.order_n,
                self.truth.order()
            )));
        }
        if let Some(noise) = &self.noise {
            if !(noise.sigma >= 0.0 && noise.sigma.is_finite()) {
                return Err(StudyError::InvalidConfig("noise sigma must be non-negative".into()));
            }
        }
        let report = check_pe_order(&self.excitation, self.fit.order_n);
        if !report.passes {
            return Err(StudyError::InsufficientExcitation {
                provided: report.pe_order,
                required: report.required_order,
            });
        }
        Ok(())
    }

    pub fn fit_freqs(&self) -> Vec<f64> {
        self.fit.freqs.clone().unwrap_or_else(|| self.excitation.omegas())
    }
}

/// Sampled input and noise-free output of the configured experiment.
pub fn simulate_experiment(cfg: &StudyConfig) -> Result<(TimeSeries, TimeSeries), StudyError> {
    let u = sample(&cfg.excitation, cfg.fs, cfg.duration)?;
    let ss = to_state_space(&to_modal(&cfg.truth)?);
    let y = simulate_response_with_hold(&ss, &u, None, cfg.sim_hold)?;
    Ok((u, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStats {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub std: f64,
    /// `100 |truth - mean| / |truth|`.
    pub e_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyStats {
    pub trials: usize,
    pub accepted_count: usize,
    pub outlier_count: usize,
    pub reject_counts: BTreeMap<RejectReason, usize>,
    pub parameters: Vec<ParamStats>,
}

impl StudyStats {
    pub fn param(&self, name: &str) -> Option<&ParamStats> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

fn run_one(
    data: &FrequencyData,
    cfg: &StudyConfig,
    index: usize,
) -> TrialResult {
    let seed = cfg.fit.init_seed.wrapping_add(index as u64);
    let noise_seed = cfg.noise.map(|n| n.seed.wrapping_add(index as u64));
    let fit_cfg = FitConfig { init_seed: seed, ..cfg.fit.clone() };
    match fit_frequency_response(data, &fit_cfg) {
        Ok(fit) => judge_fit(fit, cfg.fit.order_n, &cfg.outliers, index, seed, noise_seed),
        Err(e) => {
            log::debug!("trial {index}: {e}");
            failed_trial(index, seed, noise_seed)
        }
    }
}

/// Runs every trial and summarises the accepted ones. A study where every
/// trial is rejected still returns its trials; the summary is then `None`.
pub fn run_study(cfg: &StudyConfig) -> Result<(Option<StudyStats>, Vec<TrialResult>), StudyError> {
    cfg.validate()?;
    let (u, y) = simulate_experiment(cfg)?;
    let freqs = cfg.fit_freqs();
    let settle = cfg.fit.settle_time;

    let trials: Vec<TrialResult> = match cfg.noise.filter(|n| n.sigma > 0.0) {
        None => {
            let data = empirical_response(&u, &y, &freqs, settle)?;
            (0..cfg.trials).into_par_iter().map(|i| run_one(&data, cfg, i)).collect()
        }
        Some(noise) => {
            // Surface configuration errors once rather than per trial.
            empirical_response(&u, &y, &freqs, settle)?;
            (0..cfg.trials)
                .into_par_iter()
                .map(|i| {
                    let spec = NoiseSpec { sigma: noise.sigma, seed: noise.seed.wrapping_add(i as u64) };
                    let data = add_noise(&y, &spec)
                        .map_err(StudyError::from)
                        .and_then(|yn| Ok(empirical_response(&u, &yn, &freqs, settle)?));
                    match data {
                        Ok(data) => run_one(&data, cfg, i),
                        Err(e) => {
                            log::debug!("trial {i}: {e}");
                            failed_trial(i, cfg.fit.init_seed.wrapping_add(i as u64), Some(spec.seed))
                        }
                    }
                })
                .collect()
        }
    };

    let stats = match summarize(&trials, &cfg.truth) {
        Ok(s) => Some(s),
        Err(StudyError::NoAcceptedTrials) => None,
        Err(e) => return Err(e),
    };
    Ok((stats, trials))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

fn accepted_vectors(results: &[TrialResult]) -> Vec<Vec<f64>> {
    results
        .iter()
        .filter(|r| r.accepted)
        .filter_map(|r| r.params.as_ref().map(CircuitParams::to_vector))
        .collect()
}

/// Mean, sample standard deviation (`N - 1` divisor, 0 for a single value)
/// and relative mean error over the accepted trials.
pub fn summarize(results: &[TrialResult], truth: &CircuitParams<f64>) -> Result<StudyStats, StudyError> {
    let vectors = accepted_vectors(results);
    if vectors.is_empty() {
        return Err(StudyError::NoAcceptedTrials);
    }
    let truth_vec = truth.to_vector();
    if vectors.iter().any(|v| v.len() != truth_vec.len()) {
        return Err(StudyError::InvalidConfig("accepted parameters differ in order from the truth".into()));
    }
    let parameters = parameter_names(truth.order())
        .into_iter()
        .enumerate()
        .map(|(k, name)| {
            let column: Vec<f64> = vectors.iter().map(|v| v[k]).collect();
            let (mean, std) = mean_std(&column);
            let t = truth_vec[k];
            ParamStats { name, truth: t, mean, std, e_r: 100.0 * ((t - mean) / t).abs() }
        })
        .collect();
    let mut reject_counts = BTreeMap::new();
    for r in results.iter().filter_map(|r| r.reject_reason) {
        *reject_counts.entry(r).or_insert(0) += 1;
    }
    Ok(StudyStats {
        trials: results.len(),
        accepted_count: vectors.len(),
        outlier_count: results.len() - vectors.len(),
        reject_counts,
        parameters,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub param: String,
    pub rows: Vec<HistogramRow>,
}

/// Equal-width bins over `[min, max]` of each parameter, last bin closed.
/// When all values coincide a single bin holds them.
pub fn histogram_export(results: &[TrialResult], bins: usize) -> Result<Vec<Histogram>, StudyError> {
    if bins == 0 {
        return Err(StudyError::InvalidConfig("bins must be at least 1".into()));
    }
    let vectors = accepted_vectors(results);
    let Some(first) = vectors.first() else {
        return Err(StudyError::NoAcceptedTrials);
    };
    let n = (first.len() - 2) / 2;
    Ok(parameter_names(n)
        .into_iter()
        .enumerate()
        .map(|(k, param)| {
            let column: Vec<f64> = vectors.iter().map(|v| v[k]).collect();
            let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi <= lo {
                return Histogram {
                    param,
                    rows: vec![HistogramRow { bin_low: lo, bin_high: hi, count: column.len() }],
                };
            }
            let width = (hi - lo) / bins as f64;
            let mut counts = vec![0usize; bins];
            for v in &column {
                let idx = (((v - lo) / width).floor() as usize).min(bins - 1);
                counts[idx] += 1;
            }
            let rows = counts
                .into_iter()
                .enumerate()
                .map(|(i, count)| HistogramRow {
                    bin_low: lo + width * i as f64,
                    bin_high: if i + 1 == bins { hi } else { lo + width * (i + 1) as f64 },
                    count,
                })
                .collect();
            Histogram { param, rows }
        })
        .collect())
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `stats.json` (when present), `trials.json` and one
/// `hist_<param>.csv` per parameter into `dir`.
pub fn write_outputs(
    dir: &Path,
    stats: Option<&StudyStats>,
    trials: &[TrialResult],
    bins: usize,
) -> Result<(), StudyError> {
    fs::create_dir_all(dir)?;
    if let Some(stats) = stats {
        fs::write(dir.join("stats.json"), serde_json::to_string_pretty(stats)? + "\n")?;
    }
    fs::write(dir.join("trials.json"), serde_json::to_string_pretty(trials)? + "\n")?;
    if stats.is_some() {
        for hist in histogram_export(trials, bins)? {
            let mut w = csv::Writer::from_path(dir.join(format!("hist_{}.csv", hist.param)))?;
            w.write_record(["bin_low", "bin_high", "count"])?;
            for row in &hist.rows {
                w.write_record([fmt17(row.bin_low), fmt17(row.bin_high), row.count.to_string()])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
