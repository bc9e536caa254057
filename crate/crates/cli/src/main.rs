//! Command-line driver: volatile runs, parameter sweeps, connectivity
//! analysis, and schedule validation.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use subset_equalizing::connectivity::{default_horizon, h_star};
use subset_equalizing::harness::{
    run_sweep, run_volatile, sweep_csv, volatile_csv, ScenarioConfig,
};
use subset_equalizing::net::ActionSequence;

#[derive(Parser)]
#[command(
    name = "se",
    version,
    about = "Distributed equalizing solver simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one volatile-network scenario and emit its per-step trace CSV.
    Volatile {
        /// JSON scenario configuration (kind = "volatile").
        #[arg(long)]
        config: PathBuf,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured output path (stdout when neither is set).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a parameter sweep and emit the aggregated CSV.
    Sweep {
        /// JSON scenario configuration (kind = "sweep").
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analyze connectivity of an action sequence and emit a JSON report.
    Connectivity {
        /// Action sequence JSON file.
        #[arg(long)]
        seq: PathBuf,
        /// Largest origin time to analyze.
        #[arg(long)]
        k: usize,
        /// Search horizon per origin (defaults to a generous bound).
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check an action sequence against the step contract.
    Validate {
        /// Action sequence JSON file.
        #[arg(long)]
        seq: PathBuf,
        /// Horizon to check (defaults to the prefix plus one period).
        #[arg(long)]
        horizon: Option<usize>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Volatile { config, seed, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.set_seed(seed);
            }
            let ScenarioConfig::Volatile(v) = &cfg else {
                return Err(format!(
                    "{} is not a volatile configuration",
                    config.display()
                ));
            };
            let run = run_volatile(v).map_err(|e| e.to_string())?;
            emit(out.as_ref().or(cfg.out()), &volatile_csv(&run.trace))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, seed, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.set_seed(seed);
            }
            let ScenarioConfig::Sweep(s) = &cfg else {
                return Err(format!("{} is not a sweep configuration", config.display()));
            };
            let rows = run_sweep(s).map_err(|e| e.to_string())?;
            emit(out.as_ref().or(cfg.out()), &sweep_csv(&rows))?;
            let capped: Vec<String> = rows
                .iter()
                .filter(|r| r.scenarios_converged < s.scenarios)
                .map(|r| {
                    format!(
                        "{} at {} ({}/{} converged)",
                        r.algorithm, r.param_value, r.scenarios_converged, s.scenarios
                    )
                })
                .collect();
            if capped.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("iteration cap hit in: {}", capped.join(", "));
                Ok(ExitCode::from(3))
            }
        }
        Command::Connectivity {
            seq,
            k,
            horizon,
            out,
        } => {
            let sequence = load_sequence(&seq)?;
            let horizon = horizon.unwrap_or_else(|| default_horizon(&sequence));
            let report = h_star(&sequence, k, horizon).map_err(|e| e.to_string())?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
            emit(out.as_ref(), &format!("{json}\n"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { seq, horizon } => {
            let sequence = load_sequence(&seq)?;
            let horizon =
                horizon.unwrap_or_else(|| sequence.prefix_len() + sequence.period.unwrap_or(0));
            match sequence.validate(horizon) {
                Ok(()) => {
                    println!("ok: {} steps checked", horizon);
                    Ok(ExitCode::SUCCESS)
                }
                Err(violations) => {
                    for v in &violations {
                        eprintln!("{v}");
                    }
                    Err(format!(
                        "{} violation(s) up to step {horizon}",
                        violations.len()
                    ))
                }
            }
        }
    }
}

fn load_config(path: &PathBuf) -> Result<ScenarioConfig, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    ScenarioConfig::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_sequence(path: &PathBuf) -> Result<ActionSequence, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let seq = ActionSequence::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    seq.check_structure()
        .map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(seq)
}

fn emit(path: Option<&PathBuf>, content: &str) -> Result<(), String> {
    match path {
        Some(p) => fs::write(p, content).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}
