//! `mimo-asympt`: asymptotic tables, Monte Carlo runs, CDF comparisons and
//! outage curves for MMSE and optimal MIMO receivers.

mod commands;
mod error;
mod format;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mimo_asympt::Workers;

use crate::commands::Context;
use crate::error::{CliError, CliResult};
use crate::scenario::Scenario;

/// Caps the number of worker threads; 0 or unset picks all cores.
const THREADS_ENV: &str = "MIMO_ASYMPT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "mimo-asympt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Deterministic-equivalent statistics per SNR point (no sampling).
    Asymptotics(CommonArgs),
    /// Monte Carlo samples and summary at one SNR point.
    Simulate(CommonArgs),
    /// Analytic vs empirical CDFs of the mutual information.
    Compare(CommonArgs),
    /// Outage probability against SNR.
    Outage(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Units for values printed to the terminal.
    #[arg(long, value_enum, default_value_t = Units::Bpcu)]
    units: Units,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Units {
    Nats,
    Bpcu,
}

fn workers_from_env() -> CliResult<Workers> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Config(format!("{THREADS_ENV} must be a nonnegative integer, got {v:?}")))?,
        _ => 0,
    };
    Ok(Workers::with_threads(threads)?)
}

fn run(cli: Cli) -> CliResult<()> {
    let (args, f): (CommonArgs, fn(&Context) -> CliResult<()>) = match cli.command {
        Command::Asymptotics(a) => (a, commands::asymptotics),
        Command::Simulate(a) => (a, commands::simulate),
        Command::Compare(a) => (a, commands::compare),
        Command::Outage(a) => (a, commands::outage),
    };
    let scenario = Scenario::load(&args.scenario)?;
    let workers = workers_from_env()?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", args.out.display())))?;
    f(&Context {
        scenario,
        out: args.out,
        units: args.units,
        workers,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mimo-asympt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
