use std::process::ExitCode;

use clap::{Parser, Subcommand};
use postpred_cli::config::{FlagSet, RunConfig};
use postpred_cli::{estimate, risk_cmd, validate, AppError};

/// Estimate conditional distributions, densities, CDFs and regression
/// curves from paired samples by posterior predictive averaging; validate
/// the computation engines against each other; compare estimators by
/// Monte Carlo Bayes risk.
#[derive(Parser)]
#[command(name = "postpred", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate the estimated curves on grids and emit CSV tables
    Estimate(FlagSet),
    /// Compare the posterior predictive estimator against competitors by
    /// paired Monte Carlo Bayes risk
    Risk(FlagSet),
    /// Run exact identity checks (finite families) or engine cross-checks
    /// (closed-form families) and report violations
    Validate(FlagSet),
}

fn execute(cli: &Cli) -> Result<(), AppError> {
    let (flags, runner): (&FlagSet, fn(&RunConfig) -> Result<(), AppError>) = match &cli.command {
        Cmd::Estimate(f) => (f, estimate::run),
        Cmd::Risk(f) => (f, risk_cmd::run),
        Cmd::Validate(f) => (f, validate::run),
    };
    let cfg = RunConfig::load(flags)?;
    runner(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
