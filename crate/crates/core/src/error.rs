use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::features::FeatureError;
use crate::forest::ForestError;
use crate::impute::ImputeError;
use crate::ingest::IngestError;
use crate::linmodels::CoxError;
use crate::pipeline::PipelineError;
use crate::selection::SelectionError;
use crate::survcore::SurvError;
use crate::synthgen::SynthError;

/// Any failure surfaced by the command-line workflow.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Input { path: PathBuf, source: Box<Error> },
    #[error("config: {0}")]
    Config(String),
    #[error("config file: {0}")]
    ConfigFile(#[from] toml::de::Error),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Impute(#[from] ImputeError),
    #[error(transparent)]
    Surv(#[from] SurvError),
    #[error(transparent)]
    Cox(#[from] CoxError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Attaches the offending file to a parse error.
    pub fn in_file(path: &Path, err: impl Into<Error>) -> Self {
        Error::Input {
            path: path.to_path_buf(),
            source: Box::new(err.into()),
        }
    }

    /// 2 for broken internal invariants, 1 for everything the user can fix.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Internal(_) => 2,
            Error::Input { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
