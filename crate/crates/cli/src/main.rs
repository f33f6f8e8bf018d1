//! `growthcast`: logistic fits, readiness diagnostics, ensemble forecasts and
//! their verification for cumulative case-count series.
//!
//! Exit codes: 0 success, 2 usage, 3 data or parse error, 4 fit or ensemble
//! collapse, 5 I/O.

mod commands;
mod config;
mod error;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Outcome;
use crate::config::{Format, RunArgs, RunConfig, VerifyArgs};
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "growthcast",
    version,
    about = "Logistic growth fits and ensemble forecasts of cumulative case counts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the bundled datasets.
    Datasets(DatasetsArgs),
    /// Fit one logistic curve to the data up to the issuance day.
    Fit(RunArgs),
    /// Growth-rate and concavity diagnostics with the readiness verdict.
    Diagnose(RunArgs),
    /// Perturbed-observation ensemble forecast and its quantile fan.
    Forecast(RunArgs),
    /// Score a forecast (or the deterministic fit) against observations.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct DatasetsArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

fn run(command: Command) -> Result<(Outcome, Option<PathBuf>), CliError> {
    match command {
        Command::Datasets(a) => Ok((commands::datasets(a.format, a.out_dir.clone())?, a.out_dir)),
        Command::Fit(a) => with_config(RunConfig::resolve("fit", &a)?, commands::fit),
        Command::Diagnose(a) => {
            with_config(RunConfig::resolve("diagnose", &a)?, commands::diagnose)
        }
        Command::Forecast(a) => {
            with_config(RunConfig::resolve("forecast", &a)?, commands::forecast)
        }
        Command::Verify(a) => with_config(RunConfig::resolve_verify(&a)?, commands::verify),
    }
}

fn with_config(
    config: RunConfig,
    command: fn(RunConfig) -> Result<Outcome, CliError>,
) -> Result<(Outcome, Option<PathBuf>), CliError> {
    let dir = config.out_dir.clone();
    Ok((command(config)?, dir))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let result = run(cli.command).and_then(|(outcome, dir)| {
        if let Some(dir) = dir {
            outcome.write_files(&dir)?;
        }
        let mut stdout = std::io::stdout().lock();
        stdout
            .write_all(outcome.stdout.as_bytes())
            .and_then(|_| stdout.flush())
            .map_err(|e| CliError::io("<stdout>".as_ref(), e))?;
        outcome.failure.map_or(Ok(()), Err)
    });

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("growthcast: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
