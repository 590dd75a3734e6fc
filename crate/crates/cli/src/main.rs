//! `fedcentroid` command-line runner.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 runtime error,
//! 4 error-bound violation.

mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedcentroid::data::FederatedData;
use fedcentroid::driver::{compare_modes, run_federation, FederationConfig, Mode};
use fedcentroid::verify::{error_trend, evaluate, suite_seeds, BoundInstance, InstanceOutcome};

use config::RunManifest;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_BOUND: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "fedcentroid",
    version,
    about = "Centroid-based federated learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one federation and write rounds.csv and summary.json.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Write measured timings into rounds.csv (breaks byte-for-byte reproducibility).
        #[arg(long)]
        wall_clock: bool,
    },
    /// Check the approximation-error bound on randomized instances.
    VerifyBounds {
        config: PathBuf,
        #[arg(long, default_value_t = 20)]
        instances: usize,
        /// Use this clustering ratio for every instance.
        #[arg(long)]
        beta: Option<f64>,
        /// Evaluate only the instance with this seed.
        #[arg(long)]
        replay: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run the centroid mode at several clustering ratios next to the baselines.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        betas: Vec<f64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl ToString) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.to_string(),
        }
    }

    fn runtime(message: impl ToString) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Run {
            config,
            output_dir,
            wall_clock,
        } => cmd_run(&config, output_dir, wall_clock),
        Command::VerifyBounds {
            config,
            instances,
            beta,
            replay,
            output_dir,
        } => cmd_verify_bounds(&config, instances, beta, replay, output_dir),
        Command::Sweep {
            config,
            betas,
            output_dir,
        } => cmd_sweep(&config, &betas, output_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(config: &Path, output_dir: Option<PathBuf>) -> Result<(RunManifest, PathBuf), Failure> {
    let m = RunManifest::load(config).map_err(Failure::config)?;
    let dir = output_dir.unwrap_or_else(|| m.output_dir.clone());
    let dir = report::prepare_output(&dir, config).map_err(Failure::runtime)?;
    Ok((m, dir))
}

fn data_for(m: &RunManifest) -> Result<FederatedData, Failure> {
    FederatedData::synthetic(&m.data, m.federation.clients, m.federation.seed)
        .map_err(Failure::config)
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn cmd_run(config: &Path, output_dir: Option<PathBuf>, wall_clock: bool) -> Result<(), Failure> {
    let (m, dir) = load(config, output_dir)?;
    let data = data_for(&m)?;
    let outcome = run_federation(&m.federation, &data).map_err(Failure::runtime)?;
    let written = report::write_run(&m, &dir, &outcome, wall_clock).map_err(Failure::runtime)?;
    print_written(&written);
    let last = outcome.reports.last().expect("rounds >= 1");
    println!(
        "{} rounds, mode {}, final mean loss {:.6}, uploaded {} bytes",
        m.federation.rounds,
        m.federation.mode,
        last.mean_loss(),
        outcome.total_tx_bytes()
    );
    Ok(())
}

fn cmd_verify_bounds(
    config: &Path,
    instances: usize,
    beta: Option<f64>,
    replay: Option<u64>,
    output_dir: Option<PathBuf>,
) -> Result<(), Failure> {
    if instances == 0 {
        return Err(Failure::config("--instances must be >= 1"));
    }
    if let Some(b) = beta {
        if !(b > 0.0 && b <= 1.0) {
            return Err(Failure::config(format!(
                "--beta must be in (0, 1], got {b}"
            )));
        }
    }
    let (m, dir) = load(config, output_dir)?;
    let seeds = match replay {
        Some(s) => vec![s],
        None => suite_seeds(m.federation.seed, instances),
    };
    let outcomes = seeds
        .iter()
        .map(|&s| evaluate(&BoundInstance::random(s, beta)))
        .collect::<Result<Vec<InstanceOutcome>, _>>()
        .map_err(Failure::runtime)?;

    let mut written = vec![report::write(
        &dir,
        "bounds.csv",
        &report::bounds_csv(&outcomes).map_err(Failure::runtime)?,
    )
    .map_err(Failure::runtime)?];

    let trend = if replay.is_none() {
        Some(error_trend(m.federation.seed, instances, 0.1, 0.9).map_err(Failure::runtime)?)
    } else {
        None
    };
    #[derive(serde::Serialize)]
    struct BoundsSummary<'a> {
        instances: &'a [InstanceOutcome],
        trend: Option<&'a fedcentroid::verify::TrendReport>,
    }
    let body = report::json(&BoundsSummary {
        instances: &outcomes,
        trend: trend.as_ref(),
    })
    .map_err(Failure::runtime)?;
    written.push(report::write(&dir, "bounds.json", &body).map_err(Failure::runtime)?);
    print_written(&written);

    let worst = outcomes
        .iter()
        .map(|o| o.report.max_abs_error)
        .fold(0.0, f64::max);
    let worst_gap = outcomes
        .iter()
        .map(|o| o.mean_relative_gap)
        .fold(0.0, f64::max);
    println!(
        "{} instances: largest max|eps| {worst:e}, largest client-mean gap {worst_gap:e}",
        outcomes.len()
    );
    if let Some(o) = outcomes.first().filter(|_| replay.is_some()) {
        println!(
            "seed {}: max|eps| {:e}, bound {:e}",
            o.instance.seed, o.report.max_abs_error, o.report.theoretical_bound
        );
    }

    let violations: Vec<&InstanceOutcome> = outcomes
        .iter()
        .filter(|o| !o.report.within_bound())
        .collect();
    for v in &violations {
        eprintln!(
            "bound violated by seed {}: max|eps| {:e} > {:e}; replay with --replay {}",
            v.instance.seed, v.report.max_abs_error, v.report.theoretical_bound, v.instance.seed
        );
    }
    if let Some(t) = &trend {
        println!(
            "trend over {} seeds: mean max|eps| {:e} at beta {} vs {:e} at beta {}",
            t.seeds, t.mean_error_low, t.low_beta, t.mean_error_high, t.high_beta
        );
    }
    let trend_ok = trend.as_ref().is_none_or(|t| t.holds());
    if !violations.is_empty() || !trend_ok {
        let message = if violations.is_empty() {
            "error did not decrease from beta 0.1 to beta 0.9".to_string()
        } else {
            format!(
                "{} of {} instances violate the bound",
                violations.len(),
                outcomes.len()
            )
        };
        return Err(Failure {
            code: EXIT_BOUND,
            message,
        });
    }
    Ok(())
}

fn cmd_sweep(config: &Path, betas: &[f64], output_dir: Option<PathBuf>) -> Result<(), Failure> {
    if betas.is_empty() {
        return Err(Failure::config("--betas needs at least one value"));
    }
    if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
        return Err(Failure::config(format!("--betas: {b} is outside (0, 1]")));
    }
    let (m, dir) = load(config, output_dir)?;
    let data = data_for(&m)?;

    let base = FederationConfig {
        dp: None,
        ..m.federation.clone()
    };
    let mut cfgs: Vec<FederationConfig> = betas
        .iter()
        .map(|&beta| FederationConfig {
            beta,
            mode: Mode::Centroid,
            ..base.clone()
        })
        .collect();
    let mut labels: Vec<Option<f64>> = betas.iter().copied().map(Some).collect();
    for mode in [Mode::FedAvg, Mode::NoAggregation] {
        cfgs.push(FederationConfig {
            mode,
            ..base.clone()
        });
        labels.push(None);
    }
    let table = compare_modes(&cfgs, &data).map_err(Failure::runtime)?;
    let csv = report::sweep_csv(&table, &labels).map_err(Failure::runtime)?;
    let path = report::write(&dir, "sweep.csv", &csv).map_err(Failure::runtime)?;
    print_written(&[path]);
    if let Some(last) = table.rows.last() {
        for mode in &last.modes {
            println!(
                "{:>16}  final mean loss {:.6}  spread {:.3e}",
                mode.label, mode.mean_loss, mode.loss_spread
            );
        }
    }
    Ok(())
}
