//! `uq` — posterior inference and predictive uncertainty for the built-in
//! differential-equation benchmark problems.

mod config;
mod error;
mod pipeline;

use std::path::PathBuf;
use std::process;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "uq",
    about = "Uncertainty quantification for differential-equation models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run inference from a TOML config and write artifacts.
    Run {
        /// Path to the run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the available problems and inference methods.
    Catalog,
    /// Compare analytic gradients against finite differences.
    Gradcheck {
        /// Path to the run configuration.
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate a problem's datasets and write them as CSV.
    Data {
        /// Problem identifier (see `uq catalog`).
        #[arg(long)]
        problem: String,
        /// Seed for the synthetic data.
        #[arg(long)]
        seed: u64,
        /// Directory for the CSV files.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Run { config, out, seed } => pipeline::cmd_run(&config, out, seed),
        Command::Catalog => {
            pipeline::cmd_catalog();
            Ok(())
        }
        Command::Gradcheck { config } => pipeline::cmd_gradcheck(&config),
        Command::Data { problem, seed, out } => pipeline::cmd_data(&problem, seed, &out),
    });
    if let Err(e) = result {
        eprintln!("error: {e}");
        process::exit(e.exit_code());
    }
}

/// `UQ_THREADS` caps the worker pool used by parallel ensemble training.
fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("UQ_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Config(format!("UQ_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot configure thread pool: {e}")))
}
