//! `dhs`: command-line front-end for the distributed HMM filtering
//! simulation harness.
//!
//! Exit codes: 0 success, 1 configuration/validation error, 2 runtime or
//! tractability failure, 3 assertion-style comparison failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use diffusion_hmm::harness::{
    cmd_counterexample, cmd_error, cmd_oracle, cmd_risk, cmd_simulate, exit_code,
    CommandOutput, ExperimentConfig, Overrides,
};
use diffusion_hmm::Error;

#[derive(Parser)]
#[command(name = "dhs", version, about = "Distributed HMM filtering simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the base seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of Monte Carlo runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Override the time horizon (steps).
    #[arg(long)]
    horizon: Option<usize>,
    /// Output directory for CSV files and summary.json.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Also write per-step belief vectors (simulate only).
    #[arg(long)]
    emit_beliefs: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run trajectories and write per-run CSV traces.
    Simulate(CommonArgs),
    /// Estimate posterior/prior risks with asymptotic bounds.
    Risk(CommonArgs),
    /// Estimate per-agent error probabilities with confidence intervals.
    Error(CommonArgs),
    /// Compare grid density evolution against a Monte Carlo oracle.
    Oracle(CommonArgs),
    /// Run the three-agent peripheral/central disagreement example.
    Counterexample {
        /// Monte Carlo runs.
        #[arg(long, default_value_t = 30_000)]
        runs: usize,
        /// Base seed.
        #[arg(long, default_value_t = 41)]
        seed: u64,
        /// Output directory for summary.json.
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
}

fn load(args: &CommonArgs) -> Result<(ExperimentConfig, PathBuf), Error> {
    let (mut cfg, base) = ExperimentConfig::load(&args.config)?;
    cfg.apply(&Overrides {
        seed: args.seed,
        runs: args.runs,
        horizon: args.horizon,
        emit_beliefs: args.emit_beliefs,
    });
    Ok((cfg, base))
}

fn finish(result: Result<CommandOutput, Error>) -> ExitCode {
    match result {
        Ok(output) => {
            println!("{}", serde_json::to_string_pretty(&output.summary).unwrap());
            for file in &output.files {
                eprintln!("wrote {}", file.display());
            }
            match output.passed {
                Some(false) => {
                    eprintln!("comparison failed");
                    ExitCode::from(3)
                }
                _ => ExitCode::SUCCESS,
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(args) => finish(
            load(&args).and_then(|(cfg, base)| cmd_simulate(&cfg, &base, &args.out)),
        ),
        Command::Risk(args) => {
            finish(load(&args).and_then(|(cfg, base)| cmd_risk(&cfg, &base, &args.out)))
        }
        Command::Error(args) => {
            finish(load(&args).and_then(|(cfg, base)| cmd_error(&cfg, &base, &args.out)))
        }
        Command::Oracle(args) => {
            finish(load(&args).and_then(|(cfg, base)| cmd_oracle(&cfg, &base, &args.out)))
        }
        Command::Counterexample { runs, seed, out } => {
            finish(cmd_counterexample(runs, seed, &out))
        }
    }
}
