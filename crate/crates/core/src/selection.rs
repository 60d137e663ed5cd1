//! Three independent feature rankings (forest permutation importance, boosted
//! Cox, elastic-net entry order) and their mean-rank consensus under a
//! variable budget.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{source_variable, FeatureMatrix};
use crate::forest::{fit_forest, permutation_importance, ForestError, ForestParams, Permutation};
use crate::impute::{ImputeError, ImputeStats, OneHotFill};
use crate::linmodels::{coxboost_fit, elastic_net_cox_fit, CoxError, LambdaGrid};
use crate::survcore::Outcome;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("rankings cover different feature sets")]
    MismatchedFeatureSets,
    #[error("budget must be at least 1")]
    BadBudget,
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Cox(#[from] CoxError),
    #[error(transparent)]
    Impute(#[from] ImputeError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SelectorMethod {
    ForestVimp,
    BoostedCox,
    ElasticNet,
}

impl SelectorMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            SelectorMethod::ForestVimp => "forest-vimp",
            SelectorMethod::BoostedCox => "boosted-cox",
            SelectorMethod::ElasticNet => "elastic-net",
        }
    }
}

impl fmt::Display for SelectorMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Scores and ranks (1 = best) per feature, in matrix column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorRanking {
    pub method: SelectorMethod,
    pub features: Vec<String>,
    pub scores: Vec<f64>,
    pub ranks: Vec<usize>,
}

impl SelectorRanking {
    /// Ranks features by `order`, a total order on column indices where
    /// "less" means "better".
    fn from_order(
        method: SelectorMethod,
        features: Vec<String>,
        scores: Vec<f64>,
        order: impl Fn(usize, usize) -> std::cmp::Ordering,
    ) -> Self {
        let p = features.len();
        let mut idx: Vec<usize> = (0..p).collect();
        idx.sort_by(|&a, &b| order(a, b).then(a.cmp(&b)));
        let mut ranks = vec![0; p];
        for (k, &j) in idx.iter().enumerate() {
            ranks[j] = k + 1;
        }
        Self {
            method,
            features,
            scores,
            ranks,
        }
    }

    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.features.iter().position(|f| f == feature).map(|j| self.ranks[j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub forest: VimpConfig,
    pub boost_step: f64,
    pub boost_iterations: usize,
    pub enet_alpha: f64,
}

/// Forest settings used for the importance ranking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VimpConfig {
    pub n_trees: usize,
    pub min_node_size: usize,
    pub min_events_per_node: usize,
    pub n_repeats: usize,
    pub seed: u64,
}

impl Default for VimpConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            min_node_size: 15,
            min_events_per_node: 3,
            n_repeats: 5,
            seed: 0,
        }
    }
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            forest: VimpConfig::default(),
            boost_step: 0.1,
            boost_iterations: 100,
            enet_alpha: 0.5,
        }
    }
}

pub fn rank_by_forest_vimp(
    matrix: &FeatureMatrix,
    outcomes: &[Outcome],
    params: &ForestParams,
    n_repeats: usize,
) -> Result<SelectorRanking, SelectionError> {
    let forest = fit_forest(matrix, outcomes, params)?;
    let report = permutation_importance(
        &forest,
        matrix,
        outcomes,
        n_repeats,
        params.master_seed,
        Permutation::Shuffle,
    )?;
    let scores = report.by_column();
    Ok(SelectorRanking::from_order(
        SelectorMethod::ForestVimp,
        matrix.column_names().to_vec(),
        scores.clone(),
        |a, b| scores[b].total_cmp(&scores[a]),
    ))
}

/// Linear models need complete rows: median / zero-one-hot imputation.
fn complete(matrix: &FeatureMatrix) -> Result<nalgebra::DMatrix<f64>, SelectionError> {
    let stats = ImputeStats::fit(matrix, OneHotFill::Zero)?;
    Ok(stats.apply(matrix)?)
}

/// Score is |coefficient| on the standardized scale. Features never picked
/// rank after every picked one.
pub fn rank_by_boosting(
    matrix: &FeatureMatrix,
    outcomes: &[Outcome],
    step_size: f64,
    iterations: usize,
) -> Result<SelectorRanking, SelectionError> {
    let x = complete(matrix)?;
    let model = coxboost_fit(&x, outcomes, matrix.column_names(), step_size, iterations)?;
    let counts = model.selection_counts();
    let scores: Vec<f64> = model.standardized.iter().map(|b| b.abs()).collect();
    Ok(SelectorRanking::from_order(
        SelectorMethod::BoostedCox,
        matrix.column_names().to_vec(),
        scores.clone(),
        |a, b| {
            (counts[b] > 0)
                .cmp(&(counts[a] > 0))
                .then(scores[b].total_cmp(&scores[a]))
                .then(counts[b].cmp(&counts[a]))
        },
    ))
}

/// Score is the largest λ at which the feature is nonzero on the automatic
/// path (0 when it never enters); earlier entry ranks higher.
pub fn rank_by_elastic_net(
    matrix: &FeatureMatrix,
    outcomes: &[Outcome],
    alpha: f64,
) -> Result<SelectorRanking, SelectionError> {
    rank_by_elastic_net_grid(matrix, outcomes, alpha, &LambdaGrid::default())
}

pub fn rank_by_elastic_net_grid(
    matrix: &FeatureMatrix,
    outcomes: &[Outcome],
    alpha: f64,
    grid: &LambdaGrid,
) -> Result<SelectorRanking, SelectionError> {
    let x = complete(matrix)?;
    let path = elastic_net_cox_fit(&x, outcomes, matrix.column_names(), alpha, grid)?;
    let scores: Vec<f64> = path.entry_lambdas().into_iter().map(|l| l.unwrap_or(0.0)).collect();
    Ok(SelectorRanking::from_order(
        SelectorMethod::ElasticNet,
        matrix.column_names().to_vec(),
        scores.clone(),
        |a, b| scores[b].total_cmp(&scores[a]),
    ))
}

/// Runs the three selectors concurrently.
pub fn rank_all(
    matrix: &FeatureMatrix,
    outcomes: &[Outcome],
    config: &SelectionConfig,
) -> Result<[SelectorRanking; 3], SelectionError> {
    let forest_params = ForestParams {
        n_trees: config.forest.n_trees,
        min_node_size: config.forest.min_node_size,
        min_events_per_node: config.forest.min_events_per_node,
        master_seed: config.forest.seed,
        ..ForestParams::default()
    };
    let (vimp, (boost, enet)) = rayon::join(
        || rank_by_forest_vimp(matrix, outcomes, &forest_params, config.forest.n_repeats),
        || {
            rayon::join(
                || rank_by_boosting(matrix, outcomes, config.boost_step, config.boost_iterations),
                || rank_by_elastic_net(matrix, outcomes, config.enet_alpha),
            )
        },
    );
    Ok([vimp?, boost?, enet?])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BudgetMode {
    /// Every column uses one slot.
    #[default]
    Columns,
    /// All columns derived from one source variable share a slot.
    SourceVariables,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusSelection {
    /// Ascending by mean rank.
    pub selected: Vec<String>,
    /// Per feature in column order.
    pub features: Vec<String>,
    pub mean_ranks: Vec<f64>,
    pub rankings: Vec<SelectorRanking>,
}

/// Mean rank across the rankings; the lowest mean ranks fill the budget
/// (lowest column index on ties).
pub fn consensus(
    rankings: &[SelectorRanking],
    budget: usize,
    mode: BudgetMode,
) -> Result<ConsensusSelection, SelectionError> {
    if budget == 0 {
        return Err(SelectionError::BadBudget);
    }
    let first = rankings.first().ok_or(SelectionError::MismatchedFeatureSets)?;
    if rankings.iter().any(|r| r.features != first.features) {
        return Err(SelectionError::MismatchedFeatureSets);
    }
    let features = first.features.clone();
    let p = features.len();
    let k = rankings.len() as f64;
    // integer sums keep the mean independent of ranking order
    let mean_ranks: Vec<f64> = (0..p)
        .map(|j| rankings.iter().map(|r| r.ranks[j]).sum::<usize>() as f64 / k)
        .collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| mean_ranks[a].total_cmp(&mean_ranks[b]).then(a.cmp(&b)));

    let mut selected = Vec::new();
    match mode {
        BudgetMode::Columns => {
            selected.extend(order.iter().take(budget).map(|&j| features[j].clone()));
        }
        BudgetMode::SourceVariables => {
            let mut slots: HashSet<&str> = HashSet::new();
            for &j in &order {
                let src = source_variable(&features[j]);
                if slots.contains(src) || slots.len() < budget {
                    slots.insert(src);
                    selected.push(features[j].clone());
                }
            }
        }
    }
    Ok(ConsensusSelection {
        selected,
        features,
        mean_ranks,
        rankings: rankings.to_vec(),
    })
}

impl ConsensusSelection {
    /// `feature,method,score,rank`
    pub fn write_rankings_csv<W: Write>(&self, out: W) -> Result<(), SelectionError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature", "method", "score", "rank"])?;
        for r in &self.rankings {
            for j in 0..r.features.len() {
                w.write_record([
                    r.features[j].as_str(),
                    r.method.tag(),
                    &r.scores[j].to_string(),
                    &r.ranks[j].to_string(),
                ])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// `feature,mean_rank,selected`, ordered by mean rank.
    pub fn write_consensus_csv<W: Write>(&self, out: W) -> Result<(), SelectionError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature", "mean_rank", "selected"])?;
        let chosen: HashSet<&String> = self.selected.iter().collect();
        let mut order: Vec<usize> = (0..self.features.len()).collect();
        order.sort_by(|&a, &b| self.mean_ranks[a].total_cmp(&self.mean_ranks[b]).then(a.cmp(&b)));
        for j in order {
            w.write_record([
                self.features[j].as_str(),
                &self.mean_ranks[j].to_string(),
                if chosen.contains(&self.features[j]) { "1" } else { "0" },
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Selected feature names from a consensus CSV.
pub fn read_selected<R: std::io::Read>(source: R) -> Result<Vec<String>, SelectionError> {
    let mut reader = csv::Reader::from_reader(source);
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.get(2) == Some("1") {
            out.push(rec[0].to_string());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranking(method: SelectorMethod, ranks: &[usize]) -> SelectorRanking {
        SelectorRanking {
            method,
            features: (0..ranks.len()).map(|j| format!("f{j}")).collect(),
            scores: ranks.iter().map(|&r| -(r as f64)).collect(),
            ranks: ranks.to_vec(),
        }
    }

    #[test]
    fn identical_rankings_take_prefix() {
        let r = ranking(SelectorMethod::ForestVimp, &[3, 1, 4, 2]);
        let c = consensus(&[r.clone(), r.clone(), r], 2, BudgetMode::Columns).unwrap();
        assert_eq!(c.selected, vec!["f1".to_string(), "f3".to_string()]);
    }

    #[test]
    fn mean_rank_arithmetic() {
        let a = ranking(SelectorMethod::ForestVimp, &[1, 3, 2]);
        let b = ranking(SelectorMethod::BoostedCox, &[3, 1, 2]);
        let c = ranking(SelectorMethod::ElasticNet, &[3, 1, 2]);
        let sel = consensus(&[a, b, c], 1, BudgetMode::Columns).unwrap();
        assert!((sel.mean_ranks[0] - 7.0 / 3.0).abs() < 1e-15);
        assert!((sel.mean_ranks[1] - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(sel.selected, vec!["f1".to_string()]);
    }

    #[test]
    fn budget_above_p_selects_all() {
        let a = ranking(SelectorMethod::ForestVimp, &[2, 1, 3]);
        let sel = consensus(&[a.clone(), a.clone(), a], 10, BudgetMode::Columns).unwrap();
        assert_eq!(sel.selected, vec!["f1", "f0", "f2"]);
    }

    #[test]
    fn mismatched_sets() {
        let a = ranking(SelectorMethod::ForestVimp, &[1, 2]);
        let b = ranking(SelectorMethod::BoostedCox, &[1, 2, 3]);
        assert!(matches!(
            consensus(&[a, b], 1, BudgetMode::Columns),
            Err(SelectionError::MismatchedFeatureSets)
        ));
    }

    #[test]
    fn source_variable_budget_groups_columns() {
        let features: Vec<String> = ["alsfrs_slope", "Age", "alsfrs_diff", "fvc_mean"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let r = SelectorRanking {
            method: SelectorMethod::ForestVimp,
            features,
            scores: vec![0.0; 4],
            ranks: vec![1, 2, 3, 4],
        };
        let sel = consensus(&[r], 2, BudgetMode::SourceVariables).unwrap();
        assert_eq!(sel.selected, vec!["alsfrs_slope", "Age", "alsfrs_diff"]);
    }

    #[test]
    fn from_order_is_total() {
        let r = SelectorRanking::from_order(
            SelectorMethod::ElasticNet,
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.0, 0.0, 0.0],
            |_, _| std::cmp::Ordering::Equal,
        );
        assert_eq!(r.ranks, vec![1, 2, 3]);
    }
}
