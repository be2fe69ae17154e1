//! Configuration, orchestration and export for the charge-parity experiments.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::Parser;

pub use commands::Command;
pub use config::{Format, RunConfig};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "qparity", version, about = "Charge-parity noise experiments on a simulated transmon")]
pub struct Args {
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config output format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

/// Loads the config, applies command-line overrides and runs the command.
pub fn run(args: &Args) -> CliResult<Vec<PathBuf>> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    if let Some(format) = args.format {
        cfg.output.format = format;
    }
    commands::execute(args.command, &cfg, args.workers)
}
