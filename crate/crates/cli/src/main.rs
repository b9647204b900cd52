#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use feeder_core::Error;

use commands::{AllocateArgs, ConvergeArgs, NewtonArgs, RatioArgs, SimulateArgs, ThresholdsArgs};

/// Stability thresholds, Newton tables, convergence diagnostics and queue
/// simulations for EV charging on a line feeder.
#[derive(Debug, Parser)]
#[command(name = "feeder", version)]
struct Cli {
    /// Write the CSV here (plus a `.manifest.json` sidecar) instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed for simulations.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for parameter sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Maximal uniform arrival rates for one network.
    Thresholds(ThresholdsArgs),
    /// Newton recovery of `a` from forward-generated voltage bounds.
    Newton(NewtonArgs),
    /// Ratio of the critical rates over a grid of voltage drops.
    Ratio(RatioArgs),
    /// Discrete end voltage against the continuum limit.
    Converge(ConvergeArgs),
    /// Stability probe of the charging queue by simulation.
    Simulate(SimulateArgs),
    /// One α-fair allocation for a given queue state.
    Allocate(AllocateArgs),
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    pub fn aborted(message: impl Into<String>) -> Self {
        Failure { code: 4, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Domain(_) | Error::Range(_) => 2,
            Error::NewtonDiverged { .. } | Error::Invariant(_) | Error::Allocation(_) => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

pub struct Context {
    pub out: Option<PathBuf>,
    pub seed: u64,
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Failure::validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure { code: 1, message: e.to_string() })?;
    }
    let ctx = Context { out: cli.out, seed: cli.seed };
    match cli.command {
        Command::Thresholds(args) => commands::thresholds(&ctx, args),
        Command::Newton(args) => commands::newton(&ctx, args),
        Command::Ratio(args) => commands::ratio(&ctx, args),
        Command::Converge(args) => commands::converge(&ctx, args),
        Command::Simulate(args) => commands::simulate(&ctx, args),
        Command::Allocate(args) => commands::allocate(&ctx, args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
