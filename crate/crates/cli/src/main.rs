//! `wbslr`: end-to-end pipeline for sparse longitudinal representation
//! learning over dated event sequences.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::PipelineConfig;

/// Exit codes: 0 success, 1 usage/config, 2 data, 3 numerical failure.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<wbslr_core::Error> for CliError {
    fn from(e: wbslr_core::Error) -> Self {
        use wbslr_core::Error::*;
        match e {
            InvalidConfig(_) => CliError::Usage(e.to_string()),
            DegenerateLabels | NonFinite(_) | Numerical(_) | NoOobCoverage => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "wbslr",
    version,
    about = "Sparse longitudinal representations for event-sequence classification",
    long_about = "Pipeline: windowed count featurization, sparse group lasso fitted by block \
                  coordinate descent, and out-of-bag-weighted bagging, with AFV/ATV/BPS baselines. \
                  All randomness flows from seeds in the config; --seed overrides the invoked \
                  command's primary seed (synth.seed for `synth`, ensemble.seed for `train`, \
                  eval.base_seed for `evaluate` and `pipeline`)."
)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the command's primary seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override paths.out_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Size of the worker thread pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Suppress progress messages.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled cohort with planted risk factors.
    Synth,
    /// Apply the observation/hold-off/monitor rules to raw events.
    Cohort,
    /// Export the configured representation as a matrix CSV.
    Featurize,
    /// Mine frequent sequential patterns from a labeled file.
    Mine,
    /// Fit the configured representation/model on a train split.
    Train,
    /// Evaluate a fitted model on held-out data over bootstrap repeats.
    Evaluate {
        /// Model file written by `train` or `pipeline`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Report the selected (window, event) coefficients of a model.
    Inspect {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// End to end: data (synth or cohort), repeated split/train/evaluate.
    Pipeline,
}

fn resolve(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut config = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(out) = &cli.out {
        config.paths.out_dir = Some(out.clone());
    }
    if let Some(seed) = cli.seed {
        match cli.command {
            Command::Synth => config.synth.seed = seed,
            Command::Train => config.ensemble.seed = seed,
            _ => config.eval.base_seed = seed,
        }
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))?;
    }
    let config = resolve(&cli)?;
    let default_model = config.out_dir().join("model.json");
    let ctx = commands::Ctx {
        config,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Synth => commands::cmd_synth(&ctx),
        Command::Cohort => commands::cmd_cohort(&ctx),
        Command::Featurize => commands::cmd_featurize(&ctx),
        Command::Mine => commands::cmd_mine(&ctx),
        Command::Train => commands::cmd_train(&ctx),
        Command::Evaluate { model } => {
            commands::cmd_evaluate(&ctx, model.as_deref().unwrap_or(&default_model))
        }
        Command::Inspect { model } => {
            commands::cmd_inspect(&ctx, model.as_deref().unwrap_or(&default_model))
        }
        Command::Pipeline => commands::cmd_pipeline(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
