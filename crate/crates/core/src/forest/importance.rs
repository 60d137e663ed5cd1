use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{score_oob, ForestError, SurvForest};
use crate::features::FeatureMatrix;
use crate::survcore::Outcome;

/// How a feature's OOB values are scrambled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Permutation {
    Shuffle,
    /// Leaves values in place; every importance is then exactly zero.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub column: usize,
    pub importance: f64,
    pub rank: usize,
}

/// Sorted by importance, descending; ties keep column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub baseline_cindex: f64,
    pub entries: Vec<FeatureImportance>,
}

impl ImportanceReport {
    /// Importance per training column.
    pub fn by_column(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.entries.len()];
        for e in &self.entries {
            v[e.column] = e.importance;
        }
        v
    }

    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.feature == feature).map(|e| e.rank)
    }
}

/// Drop in OOB concordance when one feature is permuted among each tree's
/// out-of-bag subjects, averaged over `n_repeats`.
///
/// The shuffle for `(feature, repeat)` comes from its own RNG stream of
/// `seed`, so results do not depend on scheduling.
pub fn permutation_importance(
    forest: &SurvForest,
    matrix: &FeatureMatrix,
    outcomes: &[Outcome],
    n_repeats: usize,
    seed: u64,
    permutation: Permutation,
) -> Result<ImportanceReport, ForestError> {
    if n_repeats == 0 {
        return Err(ForestError::BadParameter("n_repeats must be positive".into()));
    }
    let x = forest.design(matrix)?;
    let (baseline, _) = score_oob(&forest.oob_mortality(&x), outcomes)?;

    let n = x.nrows();
    let oob_lists: Vec<Vec<usize>> = forest
        .inbag
        .iter()
        .map(|b| (0..n).filter(|&i| b[i] == 0).collect())
        .collect();

    let p = x.ncols();
    let importances: Vec<f64> = (0..p)
        .into_par_iter()
        .map(|j| -> Result<f64, ForestError> {
            let mut total = 0.0;
            for r in 0..n_repeats {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((j * n_repeats + r) as u64);
                // donor[t][i]: whose value of feature j subject i sees in tree t
                let mut donor: Vec<Vec<usize>> = Vec::with_capacity(forest.n_trees());
                for oob in &oob_lists {
                    let mut map: Vec<usize> = (0..n).collect();
                    if permutation == Permutation::Shuffle {
                        let mut shuffled = oob.clone();
                        shuffled.shuffle(&mut rng);
                        for (&i, &d) in oob.iter().zip(&shuffled) {
                            map[i] = d;
                        }
                    }
                    donor.push(map);
                }
                let scores = forest.oob_mortality_with(|t, i, f| {
                    if f == j {
                        x[(donor[t][i], f)]
                    } else {
                        x[(i, f)]
                    }
                });
                let (c, _) = score_oob(&scores, outcomes)?;
                total += baseline - c;
            }
            Ok(total / n_repeats as f64)
        })
        .collect::<Result<_, _>>()?;

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]).then(a.cmp(&b)));
    let entries = order
        .into_iter()
        .enumerate()
        .map(|(k, j)| FeatureImportance {
            feature: forest.feature_names[j].clone(),
            column: j,
            importance: importances[j],
            rank: k + 1,
        })
        .collect();
    Ok(ImportanceReport {
        baseline_cindex: baseline,
        entries,
    })
}
