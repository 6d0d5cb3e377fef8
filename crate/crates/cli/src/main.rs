mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rdsteer_core::error::Error as CoreError;

/// CLI failure carrying the process exit code.
///
/// 1 = a numerical check or requested tolerance failed,
/// 2 = the configuration is malformed or internally inconsistent,
/// 3 = the problem data violates a precondition of the requested operation.
#[derive(Debug)]
pub enum CliError {
    Verification(String),
    Config(String),
    Precondition(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Config(_) => 2,
            CliError::Precondition(_) => 3,
        }
    }

    /// Force a core error into the precondition class, whatever its kind.
    pub fn precondition(err: CoreError) -> Self {
        CliError::Precondition(err.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Verification(msg) => write!(f, "verification failure: {msg}"),
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Precondition(msg) => write!(f, "precondition violation: {msg}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        use CoreError::*;
        let msg = err.to_string();
        match err {
            VanishingInitialState
            | NegativeState { .. }
            | NonpositiveEps(_)
            | RatioUndefined { .. }
            | RatioConditionViolated { .. }
            | AmplificationNotAboveOne(_)
            | InconsistentAmplification { .. }
            | CutoffRatioExceeded { .. }
            | HorizonTooShort { .. }
            | NonpositiveHorizon(_)
            | InvalidLipschitz { .. } => CliError::Precondition(msg),
            ApproximantBudgetNotMet { .. } | PhaseOneSearchFailed { .. }
            | LinearSolveDiverged { .. } => CliError::Verification(msg),
            _ => CliError::Config(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Config(format!("io: {err}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Config(format!("json: {err}"))
    }
}

#[derive(Parser)]
#[command(
    name = "rdsteer",
    about = "Simulate and steer reaction-diffusion states with sign-constrained coefficient controls"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if absent.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed recorded in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the time stepper on the configured problem and write the trace.
    Simulate(RunArgs),
    /// Build a piecewise-static control steering the initial state to the target.
    Synthesize(RunArgs),
    /// Check solver output against the quantitative bounds.
    Verify(RunArgs),
    /// Re-run an experiment over a list of parameter values.
    Sweep(RunArgs),
    /// Compare the finite-difference solution with a modal reference solution.
    OracleCompare(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Simulate(args) => commands::run_simulate(args.into()),
        Cmd::Synthesize(args) => commands::run_synthesize(args.into()),
        Cmd::Verify(args) => commands::run_verify(args.into()),
        Cmd::Sweep(args) => commands::run_sweep(args.into()),
        Cmd::OracleCompare(args) => commands::run_oracle_compare(args.into()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

/// Resolved invocation handed to each command.
pub struct Invocation {
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    pub seed_override: Option<u64>,
}

impl From<&RunArgs> for Invocation {
    fn from(args: &RunArgs) -> Self {
        Invocation {
            config_path: args.config.clone(),
            out_dir: args.out.clone(),
            seed_override: args.seed,
        }
    }
}
