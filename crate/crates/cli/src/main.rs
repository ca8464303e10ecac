//! `lsi`: data generation, training, prediction and evaluation of learned Lagrangians.
//!
//! Exit codes: 0 on success, 1 on runtime or numerical failure, 2 on usage or
//! configuration errors.

mod analyze;
mod error;
mod gen_data;
mod input;
mod predict;
mod reproduce;
mod settings;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "lsi", version, about = "Learn inverse modified Lagrangians from position snapshots")]
struct Cli {
    /// JSON settings for the command; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample initial states and integrate position-only trajectories.
    GenData(gen_data::Args),
    /// Fit a Lagrangian or flow-map model to a dataset.
    Train(train::Args),
    /// Integrate a trained model from an initial position and velocity.
    Predict(predict::Args),
    /// Evaluate energies, gradient alignment, contours and divergence.
    #[command(subcommand)]
    Analyze(analyze::Command),
    /// Run a full benchmark experiment with the benchmark parameters.
    #[command(subcommand)]
    Reproduce(reproduce::Command),
}

/// Sizes the global thread pool from `LSI_THREADS` (0 or unset: automatic).
fn configure_threads() -> CliResult {
    let Ok(raw) = std::env::var("LSI_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("LSI_THREADS must be a non-negative integer, got `{raw}`")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::runtime(format!("cannot start thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    configure_threads()?;
    let config = settings::load_config(cli.config.as_deref())?;
    match cli.command {
        Command::GenData(args) => gen_data::run(args, &config),
        Command::Train(args) => train::run(args, &config),
        Command::Predict(args) => predict::run(args, &config),
        Command::Analyze(cmd) => analyze::run(cmd, &config),
        Command::Reproduce(cmd) => reproduce::run(cmd, &config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
