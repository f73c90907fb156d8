//! Command-line front end: `gen-data`, `train`, `eval`, `forecast`, `analyze`.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{load_series, OutputLock};
pub use config::{
    apply_override, load_config, AnalysisConfig, AnalysisKind, DataConfig, EvalConfig, LoadedConfig, RunConfig,
};

use crate::error::{Error, Result};

/// Environment variable that fixes the worker-thread count.
pub const THREADS_ENV: &str = "ULTRASTF_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ultrastf", version, about = "Period-aware compact forecasting: data, training, evaluation, analysis")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override one config value, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the configured synthetic series as CSV.
    GenData,
    /// Train the configured model and write a checkpoint and report.
    Train,
    /// Evaluate a checkpoint on the configured partition.
    Eval {
        /// Defaults to `<out>/model.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Forecast the steps following the last window of a CSV series.
    Forecast {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
    },
    /// Parameter count, sensitivity matrix or learned shapes.
    Analyze {
        #[arg(value_enum)]
        which: Option<AnalysisKind>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Unsupported(_) => 2,
        Error::MissingFile(_) | Error::Io(_) => 3,
        Error::Shape { .. } => 4,
        Error::Data(_) | Error::Csv(_) | Error::Format(_) | Error::NoMatch(_) | Error::UndefinedMetric(_) => 5,
        Error::Diverged { .. } => 6,
        Error::Contract(_) | Error::Json(_) => 1,
    }
}

fn resolve(cli: &Cli) -> Result<LoadedConfig> {
    let mut overrides = cli.set.clone();
    // Flags win over both the file and --set.
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let mut cfg = load_config(cli.config.as_deref(), &overrides)?;
    if let Some(out) = &cli.out {
        cfg.run.out_dir = out.clone();
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    match &cli.command {
        Command::GenData => commands::gen_data(&cfg.run),
        Command::Train => commands::train_cmd(&cfg.run),
        Command::Eval { checkpoint } => commands::eval(&cfg, checkpoint.as_deref()),
        Command::Forecast { checkpoint, input } => commands::forecast(&cfg, checkpoint.as_deref(), input),
        Command::Analyze { which, checkpoint } => commands::analyze(&cfg, checkpoint.as_deref(), *which),
    }
}
