//! `gasmaster`: rates, propagation, Monte Carlo and sweeps from a JSON
//! config.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error,
//! 3 numerical failure, 4 validity-regime violation under `--strict`.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{GeneratorKind, Overrides};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Regime(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<gasmaster::Error> for CliError {
    fn from(e: gasmaster::Error) -> Self {
        use gasmaster::Error as E;
        match e {
            E::InvalidParameter(_)
            | E::DimensionMismatch(_)
            | E::NotHermitian { .. }
            | E::InvalidState(_)
            | E::Unsupported(_)
            | E::Table(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Internal(_) => 3,
            CliError::Regime(_) => 4,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "gasmaster", version, about = "Master equations for a quantum system in a dilute gas")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for all outputs; without it the primary output goes to
    /// stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Generator used by `evolve`.
    #[arg(long, global = true, value_enum)]
    generator: Option<GeneratorKind>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    trajectories: Option<usize>,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Fail with exit code 4 when a validity-regime ratio reaches one.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// LDL and CM coefficients with closed forms and regime ratios.
    Rates,
    /// Propagate rho0 over evolve.t_grid.
    Evolve,
    /// Monte Carlo collision ensemble.
    Simulate,
    /// LDL/CM ratio across sweep.theta_grid.
    Compare,
    /// Lamb-shift Hamiltonians of both generators.
    LambShift,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let base = path.parent().map(PathBuf::from).unwrap_or_default();
    let flags = Overrides {
        generator: cli.generator,
        seed: cli.seed,
        trajectories: cli.trajectories,
    };
    let resolved = config::load(path)?.resolve(&base, &flags)?;
    let outcome = match cli.command {
        Command::Rates => commands::rates(&resolved, cli.strict),
        Command::Evolve => commands::evolve(&resolved, cli.strict),
        Command::Simulate => commands::simulate(&resolved, cli.strict),
        Command::Compare => commands::compare(&resolved, cli.strict),
        Command::LambShift => commands::lamb_shift(&resolved, cli.strict),
    }?;
    commands::emit(&outcome, cli.output.as_deref())?;
    match outcome.partial_failure {
        Some(msg) => Err(CliError::Numerical(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gasmaster: {e}");
            ExitCode::from(e.code())
        }
    }
}
