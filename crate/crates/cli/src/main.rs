//! `walkproj`: batch front-end for gain synthesis, simulation and sweeps.
//!
//! Exit codes: 0 success, 2 configuration error, 3 synthesis or solver
//! failure, 4 a simulated run fell (outputs are still written).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Context, Failure};

/// Environment variable naming the output directory when `--out-dir` is absent.
const OUT_DIR_ENV: &str = "WALKPROJ_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "walkproj",
    version,
    about = "Time-projection foot placement for linear walking models"
)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Input-cost exponent, or `auto` to tune it (shorthand for `--set mu=...`).
    #[arg(long, global = true)]
    mu: Option<String>,

    /// Output directory (default: $WALKPROJ_OUT_DIR, else the current directory).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scalar unstable plant under DLQR, time-projection and continuous control.
    ScalarDemo,
    /// Footstep gain table over one phase.
    Gains,
    /// Closed-loop push simulation for one or all controllers.
    Simulate,
    /// Touchdown errors over a grid of push timings.
    SweepTiming,
    /// Viable sets of the time-projection controller and of any admissible input.
    Viability,
    /// Nominal periodic gait samples.
    Nominal,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut overrides = cli.overrides;
    if let Some(mu) = cli.mu {
        overrides.push(format!("mu={mu}"));
    }
    let ctx = Context {
        config: cli.config,
        overrides,
        out_dir: commands::out_dir(cli.out_dir.as_deref(), std::env::var(OUT_DIR_ENV).ok()),
    };
    let result = match cli.command {
        Command::ScalarDemo => commands::scalar_demo(&ctx),
        Command::Gains => commands::gains(&ctx),
        Command::Simulate => commands::simulate(&ctx),
        Command::SweepTiming => commands::sweep_timing(&ctx),
        Command::Viability => commands::viability_cmd(&ctx),
        Command::Nominal => commands::nominal(&ctx),
    };
    match result {
        Ok(out) if out.fell => {
            eprintln!("error[fell]: a simulated run fell; outputs were written");
            ExitCode::from(4)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error[config]: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Synthesis(msg)) => {
            eprintln!("error[synthesis]: {msg}");
            ExitCode::from(3)
        }
    }
}
