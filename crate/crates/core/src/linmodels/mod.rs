//! Proportional hazards models sharing one partial-likelihood engine: the
//! unpenalized Cox fit, the elastic-net path, and componentwise boosting.

mod boost;
mod cox;
mod enet;
mod partial;

use thiserror::Error;

pub use boost::{coxboost_fit, BoostedCoxModel};
pub use cox::{breslow_baseline, cox_fit, cox_predict_survival, CoxDiagnostics, CoxModel, CoxOptions};
pub use enet::{elastic_net_cox_fit, kkt_residual, LambdaGrid, PenalizedCoxPath, KKT_TOLERANCE};
pub use partial::{neg_log_partial_likelihood, Derivatives, HessianMode, RiskSetOrder};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoxError {
    #[error("no events observed")]
    NoEvents,
    #[error("column `{0}` has zero variance")]
    DegenerateColumn(String),
    #[error("monotone likelihood: coefficient of `{feature}` diverges (iteration {iteration})")]
    Separation { feature: String, iteration: usize },
    #[error("Newton-Raphson did not converge after {iterations} iterations (gradient {gradient_norm:e})")]
    NotConverged { iterations: usize, gradient_norm: f64 },
    #[error("penalized fit did not converge at lambda = {lambda:e}")]
    NonConvergence { lambda: f64 },
    #[error("information matrix is singular")]
    SingularInformation,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("design matrix contains non-finite values")]
    NonFinite,
    #[error("{0}")]
    BadParameter(String),
}
