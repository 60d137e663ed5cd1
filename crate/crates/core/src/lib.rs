//! Survival prediction from short longitudinal windows of clinical data.
//!
//! The crate covers the whole batch workflow:
//!
//! * [`ingest`]: CSV inputs into a [`Cohort`](ingest::Cohort).
//! * [`features`]: ten window statistics per longitudinal variable, the
//!   feature matrix, coverage filtering and correlation pruning.
//! * [`survcore`]: risk tables, Kaplan–Meier, Nelson–Aalen, concordance.
//! * [`linmodels`]: Cox (Efron ties), elastic-net Cox path, boosted Cox.
//! * [`forest`]: log-rank survival trees and random survival forests.
//! * [`selection`]: three feature rankings and their consensus.
//! * [`pipeline`]: cross-validated model comparison, final training and
//!   death-probability prediction.
//! * [`synthgen`]: synthetic cohorts with known ground truth.

pub mod cli;
pub mod error;
pub mod features;
pub mod forest;
pub mod impute;
pub mod ingest;
pub mod linmodels;
pub mod pipeline;
pub mod selection;
pub mod survcore;
pub mod synthgen;

pub use error::{Error, Result};
