use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::fit_model;
use super::{ModelSpec, PipelineError};
use crate::features::{prune_correlated, FeatureMatrix};
use crate::impute::{ImputeStats, OneHotFill};
use crate::survcore::{concordance_counts, concordance_index, Outcome};

/// Deals after the first before giving up on degenerate folds.
const MAX_DEALS: usize = 10;

/// Fold assignment per subject.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn held_out(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Seeded shuffle of `0..n` dealt round-robin into `k` folds.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldPlan, PipelineError> {
    if k < 2 || k > n {
        return Err(PipelineError::BadK { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % k;
    }
    Ok(FoldPlan { k, seed, assignment })
}

fn plan_is_usable(plan: &FoldPlan, outcomes: &[Outcome]) -> bool {
    (0..plan.k).all(|f| {
        let train_has_event = plan
            .assignment
            .iter()
            .zip(outcomes)
            .any(|(&a, o)| a != f && o.event);
        let test: Vec<Outcome> = plan.held_out(f).into_iter().map(|i| outcomes[i]).collect();
        let zeros = vec![0.0; test.len()];
        let comparable = matches!(concordance_counts(&zeros, &test), Ok((_, p)) if p > 0);
        train_has_event && comparable
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvOptions {
    /// Correlation pruning redone on every training fold.
    pub prune_threshold: Option<f64>,
}

/// Everything a fold learns from its training rows before any model sees
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldStatistics {
    pub columns: Vec<String>,
    /// Median / zero-one-hot fills for linear models.
    pub impute: ImputeStats,
    pub means: Vec<f64>,
    /// Population standard deviations of the imputed training design.
    pub scales: Vec<f64>,
}

fn fold_columns(train: &FeatureMatrix, options: &CvOptions) -> Result<FeatureMatrix, PipelineError> {
    Ok(match options.prune_threshold {
        Some(t) => prune_correlated(train, t)?.0,
        None => train.clone(),
    })
}

/// The statistics fold `fold` of `plan` derives from its training rows.
pub fn fold_statistics(
    matrix: &FeatureMatrix,
    plan: &FoldPlan,
    fold: usize,
    options: &CvOptions,
) -> Result<FoldStatistics, PipelineError> {
    let train = fold_columns(&matrix.select_rows(&plan.training(fold)), options)?;
    let impute = ImputeStats::fit(&train, OneHotFill::Zero)?;
    let x = impute.apply(&train)?;
    let n = x.nrows() as f64;
    let means: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
    let scales = x
        .column_iter()
        .zip(&means)
        .map(|(c, m)| (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    Ok(FoldStatistics {
        columns: train.column_names().to_vec(),
        impute,
        means,
        scales,
    })
}

/// Per-fold concordance of one model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCv {
    pub spec: ModelSpec,
    pub fold_cindex: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl ModelCv {
    fn new(spec: ModelSpec, fold_cindex: Vec<f64>) -> Self {
        let k = fold_cindex.len() as f64;
        let mean = fold_cindex.iter().sum::<f64>() / k;
        let min = fold_cindex.iter().copied().fold(f64::INFINITY, f64::min);
        let max = fold_cindex.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            spec,
            fold_cindex,
            mean: mean.clamp(min, max),
            min,
            max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub plan: FoldPlan,
    /// Canonical model order.
    pub models: Vec<ModelCv>,
}

impl CvReport {
    /// Highest mean concordance; ties go to the earlier model in canonical
    /// order.
    pub fn winner(&self) -> &ModelCv {
        let mut best = &self.models[0];
        for m in &self.models[1..] {
            if m.mean > best.mean {
                best = m;
            }
        }
        best
    }

    /// Fold rows `model,fold,cindex,,,` then summary rows
    /// `model,all,,mean,min,max`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PipelineError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "fold", "cindex", "mean", "min", "max"])?;
        for m in &self.models {
            for (f, c) in m.fold_cindex.iter().enumerate() {
                w.write_record([m.spec.tag(), &(f + 1).to_string(), &c.to_string(), "", "", ""])?;
            }
        }
        for m in &self.models {
            w.write_record([
                m.spec.tag(),
                "all",
                "",
                &m.mean.to_string(),
                &m.min.to_string(),
                &m.max.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// `model,mean,lower,upper`: a dot per model with a bar from the worst
    /// to the best fold.
    pub fn write_plot_csv<W: Write>(&self, out: W) -> Result<(), PipelineError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "mean", "lower", "upper"])?;
        for m in &self.models {
            w.write_record([
                m.spec.tag(),
                &m.mean.to_string(),
                &m.min.to_string(),
                &m.max.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn fold_cindex(
    spec: &ModelSpec,
    matrix: &FeatureMatrix,
    outcomes: &[Outcome],
    plan: &FoldPlan,
    fold: usize,
    options: &CvOptions,
) -> Result<f64, PipelineError> {
    let train_rows = plan.training(fold);
    let test_rows = plan.held_out(fold);
    let train = fold_columns(&matrix.select_rows(&train_rows), options)?;
    let train_out: Vec<Outcome> = train_rows.iter().map(|&i| outcomes[i]).collect();
    let test_out: Vec<Outcome> = test_rows.iter().map(|&i| outcomes[i]).collect();
    let seed = plan.seed.wrapping_add(fold as u64);
    let model = fit_model(spec, &train, &train_out, seed)?;
    let scores = model.risk_scores(&matrix.select_rows(&test_rows))?;
    Ok(concordance_index(&scores, &test_out)?)
}

/// Fits every spec on each fold's training rows and scores concordance on
/// the held-out rows.
///
/// A plan with an event-free training fold, or a held-out fold without a
/// comparable pair, is re-dealt with the next seed, up to ten deals.
pub fn cross_validate(
    specs: &[ModelSpec],
    matrix: &FeatureMatrix,
    outcomes: &[Outcome],
    k: usize,
    seed: u64,
    options: &CvOptions,
) -> Result<CvReport, PipelineError> {
    if specs.is_empty() {
        return Err(PipelineError::NoModels);
    }
    if matrix.n_rows() != outcomes.len() {
        return Err(PipelineError::LengthMismatch {
            rows: matrix.n_rows(),
            outcomes: outcomes.len(),
        });
    }
    let mut plan = None;
    for attempt in 0..MAX_DEALS {
        let candidate = kfold_split(outcomes.len(), k, seed.wrapping_add(attempt as u64))?;
        if plan_is_usable(&candidate, outcomes) {
            plan = Some(candidate);
            break;
        }
        log::warn!("fold plan with seed {} is degenerate; re-dealing", candidate.seed);
    }
    let plan = plan.ok_or(PipelineError::FoldDegenerate { attempts: MAX_DEALS })?;

    let mut specs = specs.to_vec();
    specs.sort_by_key(ModelSpec::canonical_rank);
    let jobs: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|s| (0..plan.k).map(move |f| (s, f)))
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(s, f)| {
            fold_cindex(&specs[s], matrix, outcomes, &plan, f, options).map_err(|e| PipelineError::Fit {
                model: specs[s].tag(),
                source: Box::new(e),
            })
        })
        .collect::<Result<_, _>>()?;

    let models = specs
        .into_iter()
        .enumerate()
        .map(|(s, spec)| ModelCv::new(spec, scores[s * plan.k..(s + 1) * plan.k].to_vec()))
        .collect();
    Ok(CvReport { plan, models })
}
