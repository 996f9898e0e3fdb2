//! Batch command-line surface for the Markov-switching VAR engine.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::RunContext;
use crate::config::{sha256_hex, LoadedConfig, ZeroDividend};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "msvar",
    version,
    about = "Bayesian Markov-switching VAR estimation and forecasting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Random seed; overrides `sampler.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a price/dividend panel into returns and log dividend yields.
    Ingest {
        /// Panel CSV; defaults to `data.panel` of the configuration.
        input: Option<PathBuf>,
    },
    /// Fit Markov-switching means and variances by EM.
    Mle,
    /// Run the Gibbs sampler and write smoothed regime probabilities.
    Gibbs,
    /// Simulate the joint predictive distribution.
    Forecast,
    /// Estimate tail probabilities by importance sampling.
    Tailprob,
    /// Project prices and quantile bands from the forecast ensemble.
    Ddm,
}

fn load(cli: &Cli) -> CliResult<LoadedConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required for this subcommand".into()))?;
    LoadedConfig::load(path)
}

pub fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    if let Some(n) = cli.threads {
        // a pool may already exist when called repeatedly in-process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    if let Command::Ingest { input } = &cli.command {
        let (path, zero, hash) = match (input, &cli.config) {
            (Some(p), _) => {
                let bytes = std::fs::read(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                (p.clone(), ZeroDividend::Drop, sha256_hex(&bytes))
            }
            (None, Some(_)) => {
                let loaded = load(cli)?;
                let p =
                    loaded.config.data.panel.as_ref().ok_or_else(|| {
                        CliError::Config("config is missing key `data.panel`".into())
                    })?;
                (
                    loaded.resolve(p),
                    loaded.config.data.zero_dividend,
                    loaded.hash.clone(),
                )
            }
            (None, None) => {
                return Err(CliError::Config(
                    "ingest needs an input CSV or --config".into(),
                ))
            }
        };
        return Ok(vec![commands::cmd_ingest(
            &path,
            hash,
            cli.seed.unwrap_or(0),
            zero,
            &cli.out_dir,
        )?]);
    }
    let loaded = load(cli)?;
    let seed = cli.seed.or(loaded.config.sampler.seed).unwrap_or(0);
    let ctx = RunContext {
        loaded,
        seed,
        out_dir: cli.out_dir.clone(),
    };
    match cli.command {
        Command::Mle => Ok(vec![commands::cmd_mle(&ctx)?]),
        Command::Gibbs => commands::cmd_gibbs(&ctx),
        Command::Forecast => commands::cmd_forecast(&ctx),
        Command::Tailprob => Ok(vec![commands::cmd_tailprob(&ctx)?]),
        Command::Ddm => Ok(vec![commands::cmd_ddm(&ctx)?]),
        Command::Ingest { .. } => unreachable!("handled above"),
    }
}
