//! `sdsearch` command-line driver.
//!
//! Exit codes: 0 success, 1 i/o error, 2 invalid config or arguments,
//! 3 solver failure, 4 oracle corpus violation.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::Command;
use config::ExperimentConfig;
use error::CliError;
use output::Format;

#[derive(Parser, Debug)]
#[command(name = "sdsearch", version, about = "Search and discovery: reservation values, simulation, demand, estimation")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Experiment config, JSON or TOML (by extension).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Top-level seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output files; stdout when absent.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

fn run(cli: &Cli) -> Result<Option<String>, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let artifact = commands::run(cli.command, &mut cfg)?;
    output::emit(cli.command.name(), &cfg, &artifact, cli.format, cli.out.as_deref())?;
    Ok(artifact.violation)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(v)) => {
            let e = CliError::Corpus(v);
            eprintln!("sdsearch: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(e) => {
            eprintln!("sdsearch: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
