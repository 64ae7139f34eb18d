//! `ldp`: drives simulations and large-deviation checks from a TOML run configuration.
//!
//! Exit codes: 0 when every check passes, 1 when some check fails, 2 for unreadable
//! input or a malformed config, 3 when a value fails validation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Failure {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Parse(_) | Failure::Runtime(_) => 2,
            Failure::Invalid(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ldp", version, about)]
struct Cli {
    /// Worker threads for Monte Carlo loops (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML).
    config: PathBuf,
    /// Override a config key, e.g. `--set run.delta=0.2`. Repeatable; applied after `LDP_SEED`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample trajectories and write one CSV per path.
    Simulate(Common),
    /// Solve the controlled skeleton equation.
    Skeleton(Common),
    /// Rate function of a target trajectory.
    Rate(Common),
    /// Tube-probability lower bound against `-I(z) - gamma`.
    VerifyLower(Common),
    /// Level-set distance upper bound against `-r + gamma`.
    VerifyUpper(Common),
    /// Martingale and stochastic-convolution tail bounds.
    Tails(Common),
    /// Noise-tail and semigroup-modulus diagnostics.
    Assumptions(Common),
    /// Merge existing report CSVs into `summary.json`.
    Report(Common),
}

type Body = fn(&config::Loaded) -> Result<commands::Summary, Failure>;

fn run(cli: Cli) -> Result<bool, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Invalid("invalid --threads: must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let (common, body): (&Common, Body) = match &cli.command {
        Command::Simulate(c) => (c, commands::simulate),
        Command::Skeleton(c) => (c, commands::skeleton),
        Command::Rate(c) => (c, commands::rate),
        Command::VerifyLower(c) => (c, commands::verify_lower),
        Command::VerifyUpper(c) => (c, commands::verify_upper),
        Command::Tails(c) => (c, commands::tails),
        Command::Assumptions(c) => (c, commands::assumptions),
        Command::Report(c) => (c, commands::report),
    };
    let env_seed = std::env::var(config::SEED_ENV).ok();
    let loaded = config::load(&common.config, &common.overrides, env_seed)?;
    let summary = body(&loaded)?;
    let dir = loaded.config.output_dir(&loaded.base_dir);
    commands::write_summary(&dir, &summary)?;
    println!(
        "{}: {}/{} checks passed; output in {}",
        summary.command,
        summary.pass_count,
        summary.check_count,
        dir.display()
    );
    Ok(summary.all_pass)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
