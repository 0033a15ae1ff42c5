use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use wdl_core::harness::{self, ExperimentConfig, ExperimentKind, Metadata};

/// Split-learning robustness experiments over simulated wireless channels.
#[derive(Parser)]
#[command(name = "wdl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discrepancy and bound per channel cell.
    BoundTable(RunArgs),
    /// Wireless loss against modulation rate, with the achievable boundary.
    RateSweep(RunArgs),
    /// Robust versus vanilla fine-tuning traces and accuracy-vs-rate.
    TrainCompare(RunArgs),
    /// Monte-Carlo bit error rate against the analytic curve.
    Ber(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV and JSON tables.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Returns the number of violated checks.
fn run(cli: Cli) -> anyhow::Result<usize> {
    let (expected, args) = match cli.command {
        Command::BoundTable(a) => (ExperimentKind::BoundTable, a),
        Command::RateSweep(a) => (ExperimentKind::RateSweep, a),
        Command::TrainCompare(a) => (ExperimentKind::TrainCompare, a),
        Command::Ber(a) => (ExperimentKind::Ber, a),
    };
    // WDL_SEED, when set, replaces master_seed.
    let config = ExperimentConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if config.experiment != expected {
        bail!("config describes a {} experiment, not {expected}", config.experiment);
    }
    let output = harness::run(&config)?;
    let metadata = Metadata::new(config.config_hash(), config.master_seed);
    for path in output.write(&args.out, &metadata)? {
        println!("wrote {}", path.display());
    }
    let violations = output.violations();
    for v in &violations {
        eprintln!("violation: {v}");
    }
    Ok(violations.len())
}
