//! Random survival forests: bootstrap samples, log-rank splitting on random
//! feature subsets, terminal-node Nelson–Aalen hazards on a shared event-time
//! grid, out-of-bag concordance and permutation importance.
//!
//! Missing cells are imputed with training medians (one-hot groups with their
//! modal level) before growing; the same statistics are applied at
//! prediction time.

mod importance;
mod logrank;
mod tree;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::impute::{ImputeError, ImputeStats, OneHotFill};
use crate::survcore::{concordance_index, Outcome, StepFunction, SurvError};

pub use importance::{permutation_importance, FeatureImportance, ImportanceReport, Permutation};
pub use logrank::logrank_split_statistic;
pub use tree::{grow_tree, SurvTree, SurvTreeNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForestError {
    #[error("no events observed")]
    NoEvents,
    #[error("degenerate split: a side is empty or the log-rank variance is zero")]
    DegenerateSplit,
    #[error("no subject is out of bag in any tree")]
    NoOobSubjects,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("need at least 2 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("{0}")]
    BadParameter(String),
    #[error("row count {rows} does not match outcome count {outcomes}")]
    LengthMismatch { rows: usize, outcomes: usize },
    #[error(transparent)]
    Impute(#[from] ImputeError),
    #[error(transparent)]
    Surv(#[from] SurvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bootstrap {
    /// `n` draws with replacement.
    Resample,
    /// Every subject exactly once (single trees and tests).
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per node; `None` means `floor(sqrt(p))`.
    pub mtry: Option<usize>,
    /// Smallest number of members a leaf may hold.
    pub min_node_size: usize,
    pub min_events_per_node: usize,
    pub master_seed: u64,
    pub bootstrap: Bootstrap,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            mtry: None,
            min_node_size: 15,
            min_events_per_node: 3,
            master_seed: 0,
            bootstrap: Bootstrap::Resample,
        }
    }
}

impl ForestParams {
    /// One tree on the full sample, every feature tried at every node.
    pub fn single_tree(min_node_size: usize, min_events_per_node: usize) -> Self {
        Self {
            n_trees: 1,
            mtry: Some(usize::MAX),
            min_node_size,
            min_events_per_node,
            master_seed: 0,
            bootstrap: Bootstrap::Identity,
        }
    }

    pub fn mtry_for(&self, p: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (p as f64).sqrt().floor() as usize)
            .clamp(1, p.max(1))
    }
}

/// Per-tree RNG: a function of `(master_seed, tree_index)` only.
pub fn tree_rng(master_seed: u64, tree_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(tree_index as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvForest {
    pub params: ForestParams,
    pub feature_names: Vec<String>,
    pub impute: ImputeStats,
    /// All distinct training event times, strictly increasing.
    pub grid: Vec<f64>,
    pub trees: Vec<SurvTree>,
    /// Per tree, how often each training subject was drawn.
    pub inbag: Vec<Vec<u32>>,
}

pub fn fit_forest(
    matrix: &FeatureMatrix,
    outcomes: &[Outcome],
    params: &ForestParams,
) -> Result<SurvForest, ForestError> {
    let n = matrix.n_rows();
    if n != outcomes.len() {
        return Err(ForestError::LengthMismatch {
            rows: n,
            outcomes: outcomes.len(),
        });
    }
    if n < 2 {
        return Err(ForestError::TooFewSubjects(n));
    }
    if params.n_trees == 0 {
        return Err(ForestError::BadParameter("n_trees must be positive".into()));
    }
    if matrix.n_cols() == 0 {
        return Err(ForestError::BadParameter("no features".into()));
    }
    let mut grid: Vec<f64> = outcomes.iter().filter(|o| o.event).map(|o| o.time).collect();
    if grid.is_empty() {
        return Err(ForestError::NoEvents);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let impute = ImputeStats::fit(matrix, OneHotFill::Mode)?;
    let x = impute.apply(matrix)?;

    let grown: Vec<(SurvTree, Vec<u32>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(params.master_seed, t);
            let sample: Vec<usize> = match params.bootstrap {
                Bootstrap::Resample => (0..n).map(|_| rng.gen_range(0..n)).collect(),
                Bootstrap::Identity => (0..n).collect(),
            };
            let mut counts = vec![0u32; n];
            for &i in &sample {
                counts[i] += 1;
            }
            let tree = grow_tree(&sample, &x, outcomes, &grid, params, &mut rng);
            (tree, counts)
        })
        .collect();
    let (trees, inbag) = grown.into_iter().unzip();

    Ok(SurvForest {
        params: params.clone(),
        feature_names: matrix.column_names().to_vec(),
        impute,
        grid,
        trees,
        inbag,
    })
}

impl SurvForest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Column indices of the training features in `columns`.
    pub fn align(&self, columns: &[String]) -> Result<Vec<usize>, ForestError> {
        self.feature_names
            .iter()
            .map(|f| {
                columns
                    .iter()
                    .position(|c| c == f)
                    .ok_or_else(|| ForestError::UnknownFeature(f.clone()))
            })
            .collect()
    }

    /// Training-ordered, imputed design for the rows of `matrix`.
    pub fn design(&self, matrix: &FeatureMatrix) -> Result<DMatrix<f64>, ForestError> {
        let cols = self.align(matrix.column_names())?;
        Ok(self.impute.apply(&matrix.select_columns(&cols))?)
    }

    fn complete_row(&self, row: &[f64]) -> Result<Vec<f64>, ForestError> {
        let mut row = row.to_vec();
        self.impute.apply_row(&mut row)?;
        Ok(row)
    }

    /// Ensemble cumulative hazard: pointwise mean of the leaf hazards.
    /// `row` follows the training column order; NaN cells are imputed.
    pub fn predict_chf(&self, row: &[f64]) -> Result<StepFunction, ForestError> {
        let row = self.complete_row(row)?;
        let mut acc = vec![0.0; self.grid.len()];
        for tree in &self.trees {
            tree.add_leaf_chf(&row, &mut acc);
        }
        let k = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        Ok(StepFunction::new(self.grid.clone(), acc, 0.0))
    }

    /// Sum of the ensemble cumulative hazard over the event-time grid.
    pub fn predict_mortality(&self, row: &[f64]) -> Result<f64, ForestError> {
        Ok(self.predict_chf(row)?.values().iter().sum())
    }

    /// Per training subject: mean leaf mortality over the trees where the
    /// subject is out of bag, `None` if it is in bag everywhere.
    pub fn oob_mortality(&self, x: &DMatrix<f64>) -> Vec<Option<f64>> {
        self.oob_mortality_with(|_, i, f| x[(i, f)])
    }

    /// Same as [`oob_mortality`](Self::oob_mortality) with cells supplied by
    /// `value(tree, subject, feature)`.
    pub(crate) fn oob_mortality_with(
        &self,
        value: impl Fn(usize, usize, usize) -> f64,
    ) -> Vec<Option<f64>> {
        let n = self.inbag.first().map_or(0, Vec::len);
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for (t, tree) in self.trees.iter().enumerate() {
            for i in 0..n {
                if self.inbag[t][i] == 0 {
                    sum[i] += tree.leaf_mortality(|f| value(t, i, f));
                    count[i] += 1;
                }
            }
        }
        sum.into_iter()
            .zip(count)
            .map(|(s, c)| (c > 0).then(|| s / c as f64))
            .collect()
    }

    /// Fraction of trees in which each subject is out of bag.
    pub fn oob_fractions(&self) -> Vec<f64> {
        let n = self.inbag.first().map_or(0, Vec::len);
        let k = self.trees.len() as f64;
        (0..n)
            .map(|i| self.inbag.iter().filter(|b| b[i] == 0).count() as f64 / k)
            .collect()
    }
}

/// Concordance of OOB mortality with the outcomes, over subjects that are
/// out of bag at least once. Returns the index and how many were excluded.
pub fn oob_concordance_detail(
    forest: &SurvForest,
    matrix: &FeatureMatrix,
    outcomes: &[Outcome],
) -> Result<(f64, usize), ForestError> {
    let x = forest.design(matrix)?;
    let scores = forest.oob_mortality(&x);
    score_oob(&scores, outcomes)
}

pub fn oob_concordance(
    forest: &SurvForest,
    matrix: &FeatureMatrix,
    outcomes: &[Outcome],
) -> Result<f64, ForestError> {
    oob_concordance_detail(forest, matrix, outcomes).map(|(c, _)| c)
}

pub(crate) fn score_oob(scores: &[Option<f64>], outcomes: &[Outcome]) -> Result<(f64, usize), ForestError> {
    if scores.len() != outcomes.len() {
        return Err(ForestError::LengthMismatch {
            rows: scores.len(),
            outcomes: outcomes.len(),
        });
    }
    let (s, o): (Vec<f64>, Vec<Outcome>) = scores
        .iter()
        .zip(outcomes)
        .filter_map(|(s, o)| s.map(|s| (s, *o)))
        .unzip();
    if s.is_empty() {
        return Err(ForestError::NoOobSubjects);
    }
    let excluded = scores.len() - s.len();
    Ok((concordance_index(&s, &o)?, excluded))
}
