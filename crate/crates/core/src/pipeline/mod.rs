//! Cross-validated comparison of the five model families, final training and
//! death-probability prediction.

mod cv;
mod model;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureError;
use crate::forest::ForestError;
use crate::impute::ImputeError;
use crate::linmodels::{CoxError, CoxOptions};
use crate::survcore::SurvError;

pub use cv::{
    cross_validate, fold_statistics, kfold_split, CvOptions, CvReport, FoldPlan, FoldStatistics,
    ModelCv,
};
pub use model::{
    independent_columns, predict_death, train_final, FittedModel, ModelBody, PredictionSet, MODEL_FORMAT, MODEL_VERSION,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("k must satisfy 2 <= k <= n (k = {k}, n = {n})")]
    BadK { k: usize, n: usize },
    #[error("no usable fold plan after {attempts} deals: some training fold has no events or some held-out fold has no comparable pair")]
    FoldDegenerate { attempts: usize },
    #[error("no prediction horizons given")]
    EmptyHorizons,
    #[error("horizons must be finite, non-negative and strictly ascending")]
    BadHorizons,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("no model specs given")]
    NoModels,
    #[error("row count {rows} does not match outcome count {outcomes}")]
    LengthMismatch { rows: usize, outcomes: usize },
    #[error("model file: {0}")]
    Serialization(#[from] serde_json::Error),
    #[error("model file has format `{format}` version {version}, expected `{MODEL_FORMAT}` version {MODEL_VERSION}")]
    UnsupportedModel { format: String, version: u32 },
    #[error("{model}: {source}")]
    Fit {
        model: &'static str,
        source: Box<PipelineError>,
    },
    #[error(transparent)]
    Cox(#[from] CoxError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Impute(#[from] ImputeError),
    #[error(transparent)]
    Surv(#[from] SurvError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl PipelineError {
    /// Strips [`PipelineError::Fit`] context.
    pub fn root(&self) -> &PipelineError {
        match self {
            PipelineError::Fit { source, .. } => source.root(),
            other => other,
        }
    }
}

/// One model family with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Tree {
        min_node_size: usize,
        min_events_per_node: usize,
    },
    Forest {
        n_trees: usize,
        mtry: Option<usize>,
        min_node_size: usize,
        min_events_per_node: usize,
    },
    Cox {
        max_iter: usize,
        tol: f64,
    },
    ElasticNet {
        alpha: f64,
        /// The path point nearest `lambda_ratio · λ_max` is used.
        lambda_ratio: f64,
    },
    Boosted {
        step_size: f64,
        iterations: usize,
    },
}

impl ModelSpec {
    pub fn tree() -> Self {
        ModelSpec::Tree {
            min_node_size: 15,
            min_events_per_node: 3,
        }
    }

    pub fn forest() -> Self {
        ModelSpec::Forest {
            n_trees: 200,
            mtry: None,
            min_node_size: 15,
            min_events_per_node: 3,
        }
    }

    pub fn cox() -> Self {
        let d = CoxOptions::default();
        ModelSpec::Cox {
            max_iter: d.max_iter,
            tol: d.tol,
        }
    }

    pub fn elastic_net() -> Self {
        ModelSpec::ElasticNet {
            alpha: 0.5,
            lambda_ratio: 0.05,
        }
    }

    pub fn boosted() -> Self {
        ModelSpec::Boosted {
            step_size: 0.1,
            iterations: 100,
        }
    }

    /// All five families with default settings, in canonical order.
    pub fn all_defaults() -> Vec<ModelSpec> {
        vec![
            Self::tree(),
            Self::forest(),
            Self::cox(),
            Self::elastic_net(),
            Self::boosted(),
        ]
    }

    pub fn default_for(tag: &str) -> Option<ModelSpec> {
        Self::all_defaults().into_iter().find(|s| s.tag() == tag)
    }

    pub fn tag(&self) -> &'static str {
        match self {
            ModelSpec::Tree { .. } => "tree",
            ModelSpec::Forest { .. } => "forest",
            ModelSpec::Cox { .. } => "cox",
            ModelSpec::ElasticNet { .. } => "elastic-net",
            ModelSpec::Boosted { .. } => "boosted",
        }
    }

    /// Position in the canonical order tree, forest, cox, elastic-net,
    /// boosted.
    pub fn canonical_rank(&self) -> usize {
        match self {
            ModelSpec::Tree { .. } => 0,
            ModelSpec::Forest { .. } => 1,
            ModelSpec::Cox { .. } => 2,
            ModelSpec::ElasticNet { .. } => 3,
            ModelSpec::Boosted { .. } => 4,
        }
    }

    /// Cox-family models score risk by linear predictor.
    pub fn is_linear(&self) -> bool {
        matches!(
            self,
            ModelSpec::Cox { .. } | ModelSpec::ElasticNet { .. } | ModelSpec::Boosted { .. }
        )
    }
}
