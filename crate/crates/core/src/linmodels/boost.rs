//! Componentwise likelihood boosting for the Cox model.
//!
//! Each iteration scores every standardized feature by `U_j² / I_j` (score
//! over information of the partial likelihood at the current β), takes the
//! best one (lowest column index on ties) and moves its coefficient by
//! `ν · U_j / I_j`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::cox::check_shapes;
use super::enet::{standardization, standardize};
use super::partial::{neg_log_partial_likelihood, HessianMode, RiskSetOrder};
use super::CoxError;
use crate::survcore::Outcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedCoxModel {
    pub feature_names: Vec<String>,
    pub step_size: f64,
    pub iterations: usize,
    /// Input scale.
    pub coefficients: Vec<f64>,
    /// Standardized scale.
    pub standardized: Vec<f64>,
    /// Feature index picked at each iteration.
    pub selections: Vec<usize>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl BoostedCoxModel {
    pub fn selection_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.feature_names.len()];
        for &j in &self.selections {
            counts[j] += 1;
        }
        counts
    }
}

pub fn coxboost_fit(
    x: &DMatrix<f64>,
    outcomes: &[Outcome],
    feature_names: &[String],
    step_size: f64,
    iterations: usize,
) -> Result<BoostedCoxModel, CoxError> {
    if !(step_size > 0.0 && step_size <= 1.0) {
        return Err(CoxError::BadParameter(format!("step size {step_size} outside (0, 1]")));
    }
    check_shapes(x, outcomes, feature_names)?;
    let risk = RiskSetOrder::new(outcomes)?;
    let (means, scales) = standardization(x);
    let xs = standardize(x, &means, &scales);
    let p = x.ncols();

    let mut beta = vec![0.0; p];
    let mut selections = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let d = neg_log_partial_likelihood(&beta, &xs, &risk, HessianMode::Diagonal);
        let mut best: Option<(usize, f64, f64)> = None;
        for (j, &scale) in scales.iter().enumerate() {
            let info = d.hessian[j];
            if scale == 0.0 || info <= 0.0 {
                continue;
            }
            let score = -d.gradient[j];
            let stat = score * score / info;
            if best.is_none_or(|(_, s, _)| stat > s) {
                best = Some((j, stat, score / info));
            }
        }
        // nothing with positive information: no feature can move
        let Some((j, _, newton)) = best else { break };
        beta[j] += step_size * newton;
        selections.push(j);
    }

    let coefficients = beta
        .iter()
        .zip(&scales)
        .map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 })
        .collect();
    Ok(BoostedCoxModel {
        feature_names: feature_names.to_vec(),
        step_size,
        iterations,
        coefficients,
        standardized: beta,
        selections,
        means,
        scales,
    })
}
