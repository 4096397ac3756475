//! `randles`: identifiability verdicts, excitation design, simulation and
//! Monte-Carlo estimation studies for generalised Randles circuits.
//!
//! Exit codes: 0 success, 1 analysis failure (insufficient excitation, no
//! accepted trial), 2 usage or configuration error.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use randles::circuit::to_modal;
use randles::excitation::{excitation_report, sample};
use randles::identifiability::{classify, verdict_for};
use randles::montecarlo::{run_study, simulate_experiment, write_outputs, StudyConfig, StudyError};
use randles::simulate::{add_noise, sampling_diagnostics, write_csv};
use randles::Circuit;

#[derive(Parser)]
#[command(name = "randles", version, about = "Generalised Randles circuit identification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the identifiability verdict for circuits with `n` RC pairs.
    Identifiability {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        /// Impose the ordering of the time constants.
        #[arg(long)]
        ordered: bool,
        /// JSON circuit whose equivalent parameter sets are listed.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Sample the configured multi-sine and report its excitation order.
    Excite(RunArgs),
    /// Simulate the configured experiment, with noise when configured.
    Simulate(RunArgs),
    /// Run the Monte-Carlo estimation study.
    Study {
        #[command(flatten)]
        run: RunArgs,
        /// Histogram bins per parameter.
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
        bins: u64,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `master_seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

/// Marks errors that map to exit code 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// A study configuration plus where to write and how to seed.
struct CliConfig {
    study: StudyConfig,
    out: PathBuf,
    seed: u64,
}

fn load_config(args: &RunArgs) -> Result<CliConfig> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| config_error(format!("cannot read {}: {e}", args.config.display())))?;
    let mut doc: Value =
        serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", args.config.display())))?;
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| config_error("configuration must be a JSON object"))?;
    let out_dir = match obj.remove("out_dir") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(_) => return Err(config_error("out_dir must be a string")),
    };
    let master_seed = match obj.remove("master_seed") {
        None | Some(Value::Null) => None,
        Some(v) => Some(v.as_u64().ok_or_else(|| config_error("master_seed must be a non-negative integer"))?),
    };
    let mut study: StudyConfig =
        serde_json::from_value(doc).map_err(|e| config_error(format!("{}: {e}", args.config.display())))?;
    let out = args
        .out
        .clone()
        .or(out_dir)
        .ok_or_else(|| config_error("no output directory: pass --out or set out_dir"))?;
    let seed = args.seed.or(master_seed).unwrap_or(0);
    study.set_master_seed(seed);
    Ok(CliConfig { study, out, seed })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_identifiability(n: u64, ordered: bool, params: Option<&Path>) -> Result<ExitCode> {
    let n = usize::try_from(n).map_err(|_| config_error("order too large"))?;
    let verdict = match params {
        None => classify(n, ordered).map_err(|e| config_error(e.to_string()))?,
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
            let p: Circuit =
                serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            p.validate().map_err(|e| config_error(e.to_string()))?;
            if p.order() != n {
                return Err(config_error(format!("--n {n} but the circuit has {} RC pairs", p.order())));
            }
            let m = to_modal(&p).map_err(|e| config_error(e.to_string()))?;
            verdict_for(&m, ordered)?
        }
    };
    print_json(&verdict)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_excite(args: &RunArgs) -> Result<ExitCode> {
    let cfg = load_config(args)?;
    let s = &cfg.study;
    s.excitation.validate().map_err(|e| config_error(e.to_string()))?;
    let u = sample(&s.excitation, s.fs, s.duration).map_err(|e| config_error(e.to_string()))?;
    let report = excitation_report(&s.excitation, s.fit.order_n, &u)?;
    fs::create_dir_all(&cfg.out)?;
    write_csv(File::create(cfg.out.join("input.csv"))?, &u, None)?;
    write_json(&cfg.out.join("excitation_report.json"), &report)?;
    if !report.passes {
        eprintln!(
            "insufficient excitation: {} spectral lines, order {} needs {}",
            report.pe_order, s.fit.order_n, report.required_order
        );
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

/// Runs the study-level checks, mapping excitation shortfalls to exit 1 and
/// everything else to a configuration error.
fn validate_study(study: &StudyConfig) -> Result<Option<ExitCode>> {
    match study.validate() {
        Ok(()) => Ok(None),
        Err(e @ StudyError::InsufficientExcitation { .. }) => {
            eprintln!("{e}");
            Ok(Some(ExitCode::from(1)))
        }
        Err(e) => Err(config_error(e.to_string())),
    }
}

fn cmd_simulate(args: &RunArgs) -> Result<ExitCode> {
    let cfg = load_config(args)?;
    if let Some(code) = validate_study(&cfg.study)? {
        return Ok(code);
    }
    for w in sampling_diagnostics(&cfg.study.truth, cfg.study.fs, cfg.study.duration) {
        log::warn!("{w:?}");
    }
    let (u, y) = simulate_experiment(&cfg.study)?;
    let y = match &cfg.study.noise {
        Some(noise) => add_noise(&y, noise)?,
        None => y,
    };
    fs::create_dir_all(&cfg.out)?;
    write_csv(File::create(cfg.out.join("data.csv"))?, &u, Some(&y))?;
    log::info!("wrote {} samples with master seed {}", u.len(), cfg.seed);
    Ok(ExitCode::SUCCESS)
}

fn cmd_study(args: &RunArgs, bins: u64) -> Result<ExitCode> {
    let cfg = load_config(args)?;
    if let Some(code) = validate_study(&cfg.study)? {
        return Ok(code);
    }
    let (stats, trials) = run_study(&cfg.study)?;
    write_outputs(&cfg.out, stats.as_ref(), &trials, bins as usize)?;
    match stats {
        Some(stats) => {
            print_json(&stats)?;
            Ok(ExitCode::SUCCESS)
        }
        None => {
            eprintln!("no trial was accepted out of {}", trials.len());
            Ok(ExitCode::from(1))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Identifiability { n, ordered, params } => cmd_identifiability(*n, *ordered, params.as_deref()),
        Command::Excite(args) => cmd_excite(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Study { run, bins } => cmd_study(run, *bins),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
