//! Argument parsing and dispatch.

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::commands::{self, ergodic::ErgodicArgs, mixing::MixingArgs, simulate::SimulateArgs, stability::StabilityArgs, Outcome};
use crate::config::ConfigError;
use crate::ensemble::threads_from_env;

#[derive(Debug, Parser)]
#[command(name = "hjs", version, about = "Simulate and diagnose diffusions with Hawkes-driven jumps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate independent paths and write one file per path.
    Simulate(SimulateArgs),
    /// Stability matrix, Lyapunov drift scan and Vandermonde checks.
    CheckStability(StabilityArgs),
    /// Long-run time average, X histogram and autocorrelation decay of one path.
    ErgodicTest(ErgodicArgs),
    /// Two-start total-variation mixing curve.
    MixingTest(MixingArgs),
}

impl Command {
    pub fn run(&self, threads: usize) -> anyhow::Result<Outcome> {
        match self {
            Command::Simulate(a) => commands::simulate::run(a, threads),
            Command::CheckStability(a) => commands::stability::run(a, threads),
            Command::ErgodicTest(a) => commands::ergodic::run(a),
            Command::MixingTest(a) => commands::mixing::run(a, threads),
        }
    }
}

/// Machine-readable form of a failure.
pub fn error_json(err: &anyhow::Error) -> serde_json::Value {
    let field = err
        .chain()
        .find_map(|e| e.downcast_ref::<ConfigError>())
        .and_then(|e| e.field().map(str::to_owned));
    let kind = match err.chain().find_map(|e| e.downcast_ref::<ConfigError>()) {
        Some(ConfigError::Io { .. }) => "io",
        Some(ConfigError::Syntax { .. }) => "config_syntax",
        Some(ConfigError::Invalid { .. }) => "invalid_parameter",
        Some(ConfigError::Dimension { .. }) => "dimension_mismatch",
        None if err.chain().any(|e| e.downcast_ref::<std::io::Error>().is_some()) => "io",
        None => "runtime",
    };
    json!({
        "error": {
            "kind": kind,
            "message": format!("{err:#}"),
            "field": field,
        }
    })
}

/// Entry point of the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|threads| cli.command.run(threads));
    match result {
        Ok(outcome) => {
            println!("{}", serde_json::to_string(&outcome).expect("outcome serialises"));
            0
        }
        Err(err) => {
            eprintln!("{}", error_json(&err));
            1
        }
    }
}
