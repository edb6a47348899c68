//! Batch front end: load a run configuration, dispatch one workflow, emit CSV
//! or a structured report. Exit codes: 0 success, 2 configuration/validation
//! error, 3 numerical failure (strict mode or selfcheck).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{load_config, SolverOverrides};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Numeric(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "sumcov",
    about = "Limiting spectral distributions for sums of separable-covariance components",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonFlags {
    /// Run configuration file (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Override the output path from the config
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override the solver residual tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Override the iteration budget
    #[arg(long)]
    max_iters: Option<u32>,
    /// Fail (exit 3) if any point does not converge
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the fixed-point system on a z grid; emit a solutions CSV
    Solve(CommonFlags),
    /// Invert the limit law to a density CSV with a summary block
    Density(CommonFlags),
    /// Draw one protocol ensemble; emit an eigenvalue CSV
    Simulate {
        #[command(flatten)]
        flags: CommonFlags,
        /// Override the ensemble seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate, predict from the same draw, and compare distributions
    Compare {
        #[command(flatten)]
        flags: CommonFlags,
        /// Override the ensemble seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate the identity-scaling closed form on z and/or x grids
    Closedform(CommonFlags),
    /// Run internal consistency checks
    Selfcheck,
}

fn merge_solver(overrides: &mut SolverOverrides, flags: &CommonFlags) {
    if flags.tol.is_some() {
        overrides.tol = flags.tol;
    }
    if flags.max_iters.is_some() {
        overrides.max_iters = flags.max_iters;
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(flags) => {
            let mut cfg: config::SolveConfig = load_config(&flags.config)?;
            merge_solver(&mut cfg.solver, &flags);
            if flags.output.is_some() {
                cfg.output = flags.output.clone();
            }
            cfg.strict |= flags.strict;
            commands::cmd_solve(cfg)
        }
        Command::Density(flags) => {
            let mut cfg: config::DensityConfig = load_config(&flags.config)?;
            merge_solver(&mut cfg.solver, &flags);
            if flags.output.is_some() {
                cfg.output = flags.output.clone();
            }
            cfg.strict |= flags.strict;
            commands::cmd_density(cfg)
        }
        Command::Simulate { flags, seed } => {
            let mut cfg: config::SimulateConfig = load_config(&flags.config)?;
            if let Some(seed) = seed {
                cfg.study.seed = seed;
            }
            if flags.output.is_some() {
                cfg.output = flags.output.clone();
            }
            commands::cmd_simulate(cfg)
        }
        Command::Compare { flags, seed } => {
            let mut cfg: config::CompareConfig = load_config(&flags.config)?;
            if let Some(seed) = seed {
                cfg.study.seed = seed;
            }
            merge_solver(&mut cfg.solver, &flags);
            if flags.output.is_some() {
                cfg.output = flags.output.clone();
            }
            commands::cmd_compare(cfg)
        }
        Command::Closedform(flags) => {
            let mut cfg: config::ClosedFormConfig = load_config(&flags.config)?;
            if flags.output.is_some() {
                cfg.output = flags.output.clone();
            }
            commands::cmd_closedform(cfg)
        }
        Command::Selfcheck => commands::cmd_selfcheck(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ CliError::Config(_)) => {
            eprintln!("{err}");
            ExitCode::from(2)
        }
        Err(err @ CliError::Numeric(_)) => {
            eprintln!("{err}");
            ExitCode::from(3)
        }
    }
}
