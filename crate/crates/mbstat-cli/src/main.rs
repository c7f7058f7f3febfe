//! Batch front end for the mbstat library.
//!
//! Each subcommand reads CSVs (or generates them), writes CSVs, and drops a
//! `.meta.json` sidecar next to its main output recording the effective
//! configuration and summary numbers; `report` gathers those sidecars back
//! up. Flags beat config-file values, which beat built-in defaults.
//!
//! Exit codes: 0 on success, 2 when the inputs or configuration are at
//! fault, 3 when the numerics refuse (overflow, failed cross-checks,
//! non-positive variance, CFL violations).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "mbstat",
    version,
    about = "Market statistics from tick data: windowed moments, collective risk-cell \
             aggregation, density recovery, and risk-domain transport"
)]
struct Cli {
    /// Key = value file supplying defaults for any omitted flag.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic tick series and risk vectors.
    Synth(commands::SynthArgs),
    /// Windowed per-company trade moments from a tick CSV.
    Moments(commands::MomentsArgs),
    /// Collective cell and market moments over the risk domain.
    Aggregate(commands::AggregateArgs),
    /// Recover a probability density from moments through its
    /// characteristic function.
    Density(commands::DensityArgs),
    /// Run a transport scenario for collective fields over the risk domain.
    Media(commands::MediaArgs),
    /// Collect .meta.json sidecars from earlier runs into one report.
    Report(commands::ReportArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overlay = match config::Overlay::load(cli.config.as_deref()) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    let result = match cli.command {
        Command::Synth(args) => commands::synth(&args, &overlay),
        Command::Moments(args) => commands::moments(&args, &overlay),
        Command::Aggregate(args) => commands::aggregate(&args, &overlay),
        Command::Density(args) => commands::density(&args, &overlay),
        Command::Media(args) => commands::media(&args),
        Command::Report(args) => commands::report(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &mbstat::Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_input_error() { 2 } else { 3 })
}
