use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Cli, Command, RESOLVED_CONFIG_FILE};
use crate::error::{Error, Result};
use crate::pipeline::ModelSpec;
use crate::selection::SelectionConfig;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_HORIZONS: [f64; 3] = [365.0, 547.0, 730.0];
pub const DEFAULT_BUDGET: usize = 6;
pub const DEFAULT_K: usize = 5;
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.95;
pub const DEFAULT_MIN_COVERAGE: f64 = 0.7;
pub const DEFAULT_SYNTH_N: usize = 800;
pub const DEFAULT_MODEL: &str = "forest";

/// Settings shared by all commands. Read from `--config`, completed from
/// flags and defaults, and echoed to `run_config.resolved`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,

    pub statics: Option<PathBuf>,
    pub longitudinal: Option<PathBuf>,
    pub outcomes: Option<PathBuf>,
    pub matrix: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub model_file: Option<PathBuf>,

    pub n: Option<usize>,
    pub synth_spec: Option<PathBuf>,

    pub window_low: Option<i64>,
    pub window_high: Option<i64>,
    pub prune_threshold: Option<f64>,
    pub min_coverage: Option<f64>,

    pub k: Option<usize>,
    pub models: Option<Vec<String>>,
    pub cv_prune_threshold: Option<f64>,

    pub budget: Option<usize>,
    pub count_source_variables: Option<bool>,
    pub selection: Option<SelectionConfig>,

    pub model: Option<String>,
    pub horizons: Option<Vec<f64>>,

    /// Hyperparameters overriding the defaults of their model family.
    pub model_params: Option<Vec<ModelSpec>>,
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn out_dir(&self) -> &Path {
        self.out_dir.as_deref().unwrap_or(Path::new("."))
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::Config(format!("missing `{key}` (flag --{} or config key)", key.replace('_', "-"))))
    }

    /// Spec for a model family: `model_params` entry if given, else defaults.
    pub fn spec_for(&self, tag: &str) -> Result<ModelSpec> {
        let from_file = self
            .model_params
            .iter()
            .flatten()
            .find(|s| s.tag() == tag)
            .cloned();
        from_file
            .or_else(|| ModelSpec::default_for(tag))
            .ok_or_else(|| Error::Config(format!("unknown model `{tag}`")))
    }

    pub fn write_resolved(&self) -> Result<()> {
        let dir = self.out_dir();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let text = toml::to_string(self).map_err(|e| Error::Internal(format!("config echo: {e}")))?;
        let path = dir.join(RESOLVED_CONFIG_FILE);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::in_file(path, e))
}

fn over<T>(flag: &Option<T>, file: &mut Option<T>)
where
    T: Clone,
{
    if flag.is_some() {
        *file = flag.clone();
    }
}

fn check_fraction(value: Option<f64>, key: &str) -> Result<()> {
    match value {
        Some(v) if !(0.0..=1.0).contains(&v) => Err(Error::Config(format!("`{key}` must lie in [0, 1], got {v}"))),
        _ => Ok(()),
    }
}

/// Merges config file, flags and defaults for the chosen command, then
/// validates everything before any work starts.
pub fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut c = match &cli.config {
        Some(path) => read_config(path)?,
        None => RunConfig::default(),
    };
    c.command = Some(cli.command.name().to_string());
    over(&cli.seed, &mut c.seed);
    over(&cli.threads, &mut c.threads);
    over(&cli.out_dir, &mut c.out_dir);
    c.seed.get_or_insert(DEFAULT_SEED);
    c.out_dir.get_or_insert_with(|| PathBuf::from("."));
    if c.threads == Some(0) {
        return Err(Error::Config("`threads` must be at least 1".into()));
    }

    match &cli.command {
        Command::Synth(a) => {
            over(&a.n, &mut c.n);
            over(&a.spec, &mut c.synth_spec);
            if c.synth_spec.is_none() {
                c.n.get_or_insert(DEFAULT_SYNTH_N);
            }
        }
        Command::Engineer(a) => {
            over(&a.statics, &mut c.statics);
            over(&a.longitudinal, &mut c.longitudinal);
            over(&a.outcomes, &mut c.outcomes);
            over(&a.window_low, &mut c.window_low);
            over(&a.window_high, &mut c.window_high);
            over(&a.prune_threshold, &mut c.prune_threshold);
            over(&a.min_coverage, &mut c.min_coverage);
            let window = crate::features::Window::default();
            let low = *c.window_low.get_or_insert(window.low);
            let high = *c.window_high.get_or_insert(window.high);
            if low > high {
                return Err(Error::Config(format!("window_low {low} exceeds window_high {high}")));
            }
            c.prune_threshold.get_or_insert(DEFAULT_PRUNE_THRESHOLD);
            c.min_coverage.get_or_insert(DEFAULT_MIN_COVERAGE);
            c.require(&c.statics, "statics")?;
            c.require(&c.longitudinal, "longitudinal")?;
            c.require(&c.outcomes, "outcomes")?;
        }
        Command::Compare(a) => {
            over(&a.matrix, &mut c.matrix);
            over(&a.outcomes, &mut c.outcomes);
            over(&a.k, &mut c.k);
            over(&a.models, &mut c.models);
            over(&a.cv_prune_threshold, &mut c.cv_prune_threshold);
            let k = *c.k.get_or_insert(DEFAULT_K);
            if k < 2 {
                return Err(Error::Config(format!("`k` must be at least 2, got {k}")));
            }
            let models = c
                .models
                .get_or_insert_with(|| ModelSpec::all_defaults().iter().map(|s| s.tag().to_string()).collect())
                .clone();
            if models.is_empty() {
                return Err(Error::Config("`models` is empty".into()));
            }
            for m in &models {
                c.spec_for(m)?;
            }
            c.require(&c.matrix, "matrix")?;
            c.require(&c.outcomes, "outcomes")?;
        }
        Command::Select(a) => {
            over(&a.matrix, &mut c.matrix);
            over(&a.outcomes, &mut c.outcomes);
            over(&a.budget, &mut c.budget);
            if a.count_source_variables {
                c.count_source_variables = Some(true);
            }
            c.count_source_variables.get_or_insert(false);
            if *c.budget.get_or_insert(DEFAULT_BUDGET) == 0 {
                return Err(Error::Config("`budget` must be at least 1".into()));
            }
            let seed = c.seed();
            let selection = c.selection.get_or_insert_with(SelectionConfig::default);
            selection.forest.seed = seed;
            c.require(&c.matrix, "matrix")?;
            c.require(&c.outcomes, "outcomes")?;
        }
        Command::Train(a) => {
            over(&a.matrix, &mut c.matrix);
            over(&a.outcomes, &mut c.outcomes);
            over(&a.model, &mut c.model);
            over(&a.features, &mut c.features);
            let model = c.model.get_or_insert_with(|| DEFAULT_MODEL.to_string()).clone();
            c.spec_for(&model)?;
            c.require(&c.matrix, "matrix")?;
            c.require(&c.outcomes, "outcomes")?;
        }
        Command::Predict(a) => {
            over(&a.model_file, &mut c.model_file);
            over(&a.matrix, &mut c.matrix);
            over(&a.horizons, &mut c.horizons);
            let horizons = c.horizons.get_or_insert_with(|| DEFAULT_HORIZONS.to_vec());
            if horizons.is_empty() {
                return Err(Error::Config("`horizons` is empty".into()));
            }
            if horizons.iter().any(|h| !(h.is_finite() && *h >= 0.0)) || horizons.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(
                    "`horizons` must be non-negative and strictly ascending".into(),
                ));
            }
            c.require(&c.model_file, "model_file")?;
            c.require(&c.matrix, "matrix")?;
        }
    }
    check_fraction(c.prune_threshold, "prune_threshold")?;
    check_fraction(c.cv_prune_threshold, "cv_prune_threshold")?;
    check_fraction(c.min_coverage, "min_coverage")?;
    Ok(c)
}
