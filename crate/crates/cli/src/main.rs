//! `steermetro`: bound tables, simulated experiments and the acceptance report.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 numerical or
//! I/O failure, 3 acceptance failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Overrides, RunConfig};
use crate::output::write_all;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<steermetro::Error> for CliError {
    fn from(e: steermetro::Error) -> Self {
        if e.is_validation() {
            Self::Validation(e.to_string())
        } else {
            Self::Numerical(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Validation(_) => 1,
            Self::Numerical(_) | Self::Io(_) => 2,
        }
    }
}

const ACCEPTANCE_FAILURE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "steermetro", version, about = "Steering certification from phase-estimation precision")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed for all random streams.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Quadrature intervals per prior axis (even).
    #[arg(long, global = true)]
    grid: Option<usize>,

    /// Simulated experiments per resource count.
    #[arg(long, global = true)]
    trials: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fisher information, thresholds and VT-YFG tables.
    Bounds,
    /// Simulated ensembles: variance against the Van Trees bound, and steering tests.
    Experiment,
    /// Acceptance suite with a pass/fail report.
    Reproduce,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Bounds => "bounds",
            Self::Experiment => "experiment",
            Self::Reproduce => "reproduce",
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides { seed: cli.seed, out: cli.out, grid: cli.grid, trials: cli.trials };
    let config = base.resolve(cli.command.name(), &overrides)?;

    let (files, code) = match cli.command {
        Command::Bounds => (commands::bounds(&config)?, 0),
        Command::Experiment => (commands::experiment(&config)?, 0),
        Command::Reproduce => {
            let r = commands::reproduce(&config)?;
            for c in &r.criteria {
                let timing = r.timings.iter().find(|t| t.id == c.id);
                let budget = match timing {
                    Some(t) => match t.budget_seconds {
                        Some(b) => format!(" ({:.1} s of {b:.0} s budget)", t.seconds),
                        None => format!(" ({:.1} s)", t.seconds),
                    },
                    None => String::new(),
                };
                let status = if c.passed && timing.is_none_or(|t| t.within_budget()) { "PASS" } else { "FAIL" };
                println!("{} {status} {}{budget}", c.id, c.title);
                for m in c.failures() {
                    println!("    {} = {} (target {})", m.name, m.value, m.target);
                }
            }
            let code = if r.passed() { 0 } else { ACCEPTANCE_FAILURE };
            let mut files = r.files;
            files.push(r.runtime);
            (files, code)
        }
    };
    write_all(&config.out, &files)?;
    for f in &files {
        println!("wrote {}", config.out.join(&f.name).display());
    }
    Ok(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
