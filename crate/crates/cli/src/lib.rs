//! Command-line front end: configuration handling, experiment commands and
//! result summaries.

pub mod config;
mod commands;
mod selftest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{report, run_command};
pub use config::{ConfigErrors, ExperimentConfig};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const RUNTIME: i32 = 2;
    pub const THRESHOLD: i32 = 3;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Selftest,
    Chaos,
    Simulate,
    Holder,
    Bounds,
}

#[derive(Debug, Parser)]
#[command(name = "pamlab", version, about = "Parabolic Anderson model with Gaussian noise: chaos, simulation and regularity experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON configuration file.
    #[arg(short, long)]
    pub config: PathBuf,
    /// Override a configuration value, e.g. `--set grid.points=256`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Run the built-in oracle checks.
    Selftest(RunArgs),
    /// Monte Carlo chaos variances.
    Chaos(RunArgs),
    /// Simulate a field ensemble and store it.
    Simulate(RunArgs),
    /// Increment moments and exponent fits on a stored ensemble.
    Holder(RunArgs),
    /// Tabulate the moment and chaos-variance bounds.
    Bounds(RunArgs),
    /// Summarize the artifacts in an output directory.
    Report {
        /// Directory holding the artifacts.
        dir: PathBuf,
    },
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::VALIDATION } else { exit::OK };
        }
    };
    let (command, args) = match cli.command {
        CliCommand::Report { dir } => return report(&dir),
        CliCommand::Selftest(a) => (Command::Selftest, a),
        CliCommand::Chaos(a) => (Command::Chaos, a),
        CliCommand::Simulate(a) => (Command::Simulate, a),
        CliCommand::Holder(a) => (Command::Holder, a),
        CliCommand::Bounds(a) => (Command::Bounds, a),
    };
    let cfg = match ExperimentConfig::load(&args.config, &args.overrides).and_then(|c| c.validate(command).map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            eprint!("{e}");
            return exit::VALIDATION;
        }
    };
    run_command(command, &cfg)
}
