//! `qgrad`: run configurations for damped gradient systems and write
//! plot-ready artifacts.
//!
//! Exit codes: 0 success, 1 configuration, capability or I/O error,
//! 2 integration failure or failed certificate.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "qgrad", version, about = "Damped gradient systems: simulation, certificates, level sets and rates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (the batch root with --batch).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run every configuration matching the glob, each in its own directory.
    #[arg(long, global = true)]
    batch: Option<String>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Integrate and write trajectory.csv and run.json.
    Simulate,
    /// Certify the angle condition and write certificate.json.
    Certify,
    /// Level-set profile, written to psi_profile.csv.
    Levelset,
    /// Full rate analysis, written to rate_report.json.
    Rates,
    /// Merge rate_summary.csv files into summary.csv.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = commands::dispatch(&cli);
    ExitCode::from(code)
}
