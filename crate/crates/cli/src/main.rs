mod analysis;
mod args;
mod keyrate;
mod manifest;
mod plots;
mod simulate;

use std::fmt;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

/// Intensity-correlation characterization for decoy-state QKD sources.
#[derive(Debug, Parser)]
#[command(name = "corrkit", version, about)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate label sequences and click logs.
    #[command(subcommand)]
    Simulate(simulate::SimulateCommand),
    /// Per-group click rates from a sequence and a click log.
    Characterize(analysis::CharacterizeArgs),
    /// Cross-cycle coincidence rates for an MDI source.
    Crosscycle(analysis::CrosscycleArgs),
    /// Intensity deviation bounds and decoy-state yield bounds.
    Security(keyrate::SecurityArgs),
    /// Key rate against distance for several deviation bounds.
    Curve(keyrate::CurveArgs),
    /// SVG and CSV plot data.
    #[command(subcommand)]
    Report(plots::ReportCommand),
    /// Click-model checks.
    #[command(subcommand)]
    Stats(plots::StatsCommand),
}

/// A command-line problem found after parsing, e.g. conflicting inputs.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    use corrkit_core::Error as E;
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Infeasible { .. } | E::Unbounded => EXIT_INFEASIBLE,
                E::Config(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Simulate(c) => simulate::run(c),
        Command::Characterize(a) => analysis::characterize(a),
        Command::Crosscycle(a) => analysis::crosscycle(a),
        Command::Security(a) => keyrate::security(a),
        Command::Curve(a) => keyrate::curve(a),
        Command::Report(c) => plots::report(c),
        Command::Stats(c) => plots::stats(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
