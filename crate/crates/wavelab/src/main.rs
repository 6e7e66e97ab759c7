//! `wavelab` — weighted space-time least squares for the 1-D wave equation.
//!
//! Subcommands: `validate`, `forward`, `control`, `invert`, `verify`. Each
//! takes a flat key-value config file and writes CSV tables, raw field dumps
//! and a manifest into the output directory. Exit codes: 0 success, 1
//! configuration or admissibility failure, 2 numerical failure.

mod config;
mod output;
mod runners;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{load_config, Mode};
use output::RunDir;
use runners::RunFailure;

#[derive(Parser)]
#[command(name = "wavelab", version, about = "Weighted wave-equation toolkit: boundary controls, potential reconstruction, estimate verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the geometric and parameter admissibility conditions.
    Validate(CommonArgs),
    /// Run the forward leapfrog solver and dump solution and fluxes.
    Forward(CommonArgs),
    /// Build a boundary control and verify it in closed loop.
    Control(CommonArgs),
    /// Reconstruct a potential from boundary-flux data.
    Invert(CommonArgs),
    /// Verify the weighted estimates empirically.
    Verify(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Configuration file (flat `key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `run.out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel worker slots for independent sweep cells (overrides
    /// `run.workers`).
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match &cli.command {
        Command::Validate(a) => (Mode::Validate, a),
        Command::Forward(a) => (Mode::Forward, a),
        Command::Control(a) => (Mode::Control, a),
        Command::Invert(a) => (Mode::Invert, a),
        Command::Verify(a) => (Mode::Verify, a),
    };

    let mut cfg = match load_config(&args.config, mode) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers.max(1);
    }
    // Environment override for reproducibility sweeps.
    if let Ok(seed) = std::env::var("WAVELAB_SEED") {
        match seed.parse::<u64>() {
            Ok(v) => cfg.seed = v,
            Err(_) => {
                eprintln!("config error: WAVELAB_SEED = `{seed}` is not an integer");
                return ExitCode::from(1);
            }
        }
    }

    let dir = match RunDir::create(&cfg.out_dir) {
        Ok(dir) => dir,
        Err(e) => {
            eprintln!("output error: {e:#}");
            return ExitCode::from(2);
        }
    };

    match runners::run(mode, &cfg, &dir) {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunFailure::Validation(msg)) => {
            eprintln!("validation failure: {msg}");
            ExitCode::from(1)
        }
        Err(RunFailure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}
