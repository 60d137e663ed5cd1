//! Command-line front end: `synth`, `engineer`, `compare`, `select`,
//! `train` and `predict`.
//!
//! Every setting can come from a flag or from a TOML file given with
//! `--config`; flags win. The fully resolved settings are written to
//! `run_config.resolved` in the output directory, in the same TOML format, so
//! a run can be repeated with `--config <dir>/run_config.resolved`.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

use crate::Result;

pub const RESOLVED_CONFIG_FILE: &str = "run_config.resolved";

#[derive(Debug, Parser)]
#[command(name = "survpipe", version, about = "Survival prediction from short longitudinal clinical windows")]
pub struct Cli {
    /// TOML file with default settings for the command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for fold plans, forests and permutations.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long = "out", short = 'o', global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cohort as the three input CSVs plus ground truth.
    Synth(SynthArgs),
    /// Build the feature matrix and prune correlated columns.
    Engineer(EngineerArgs),
    /// Cross-validate the model families and report concordance.
    Compare(CompareArgs),
    /// Rank features three ways and pick a consensus set.
    Select(SelectArgs),
    /// Fit one model on all subjects and save it.
    Train(TrainArgs),
    /// Death probabilities at the given horizons from a saved model.
    Predict(PredictArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Engineer(_) => "engineer",
            Command::Compare(_) => "compare",
            Command::Select(_) => "select",
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of subjects.
    #[arg(long)]
    pub n: Option<usize>,
    /// TOML generator spec; a built-in demo cohort otherwise.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EngineerArgs {
    #[arg(long)]
    pub statics: Option<PathBuf>,
    #[arg(long)]
    pub longitudinal: Option<PathBuf>,
    #[arg(long)]
    pub outcomes: Option<PathBuf>,
    /// First day of the baseline window.
    #[arg(long, allow_hyphen_values = true)]
    pub window_low: Option<i64>,
    /// Last day of the baseline window.
    #[arg(long, allow_hyphen_values = true)]
    pub window_high: Option<i64>,
    /// Drop a column whose |correlation| with a kept one exceeds this.
    #[arg(long)]
    pub prune_threshold: Option<f64>,
    /// Drop columns observed for fewer than this fraction of subjects.
    #[arg(long)]
    pub min_coverage: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long)]
    pub outcomes: Option<PathBuf>,
    /// Number of folds.
    #[arg(long)]
    pub k: Option<usize>,
    /// Comma-separated subset of tree,forest,cox,elastic-net,boosted.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// Redo correlation pruning inside every training fold.
    #[arg(long)]
    pub cv_prune_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long)]
    pub outcomes: Option<PathBuf>,
    /// Number of features (or source variables) to keep.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Let all columns of one source variable share a budget slot.
    #[arg(long)]
    pub count_source_variables: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long)]
    pub outcomes: Option<PathBuf>,
    /// One of tree, forest, cox, elastic-net, boosted.
    #[arg(long)]
    pub model: Option<String>,
    /// Consensus CSV; only its selected features are used.
    #[arg(long)]
    pub features: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Comma-separated horizons in days.
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<f64>>,
}

/// Resolves the configuration and runs the command.
pub fn run(cli: Cli) -> Result<()> {
    let config = config::resolve(&cli)?;
    if let Some(threads) = config.threads {
        // only the first pool build in a process takes effect
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    commands::execute(&cli.command, &config)
}
