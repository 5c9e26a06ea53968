//! Command-line driver for the linkage synthesis pipeline.

pub mod cli;
pub mod commands;
pub mod config;
pub mod output;
pub mod pipeline;

use anyhow::Result;

use crate::cli::{Cli, Command};
use crate::config::ConfigFile;

/// Bad flags, missing required values or an unusable config file.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Resolves the config file against the flags and runs the subcommand.
pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => ConfigFile::load(path).map_err(|e| UsageError(format!("{e:#}")))?,
        None => ConfigFile::default(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => config.seed().map_err(|e| UsageError(e.to_string()))?.unwrap_or(0),
    };
    let name = cli.command.name();
    let usage = |e: anyhow::Error| UsageError(format!("{e:#}"));
    match cli.command {
        Command::GenData(a) => commands::gen_data(config.merge(name, &a).map_err(usage)?, seed),
        Command::TrainPredictor(a) => commands::train_predictor(config.merge(name, &a).map_err(usage)?, seed),
        Command::TrainCgan(a) => commands::train_cgan(config.merge(name, &a).map_err(usage)?, seed),
        Command::GridSearch(a) => commands::grid_search(config.merge(name, &a).map_err(usage)?, seed),
        Command::Synthesize(a) => commands::synthesize(config.merge(name, &a).map_err(usage)?, seed),
        Command::Nsga2(a) => commands::nsga2(config.merge(name, &a).map_err(usage)?, seed),
        Command::Evaluate(a) => commands::evaluate(config.merge(name, &a).map_err(usage)?, seed),
        Command::Serve(a) => commands::serve(config.merge(name, &a).map_err(usage)?),
        Command::Repro(a) => commands::repro(config.merge(name, &a).map_err(usage)?, seed),
    }
}

/// Whether logging should be limited to warnings, from the flag or the config file.
pub fn quiet(cli: &Cli) -> bool {
    cli.quiet || cli.config.as_deref().and_then(|p| ConfigFile::load(p).ok()).is_some_and(|c| c.quiet())
}
