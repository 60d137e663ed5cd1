use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ModelSpec, PipelineError};
use crate::features::FeatureMatrix;
use crate::forest::{fit_forest, ForestParams, SurvForest};
use crate::impute::{ImputeStats, OneHotFill};
use crate::linmodels::{coxboost_fit, cox_fit, elastic_net_cox_fit, CoxModel, CoxOptions, LambdaGrid};
use crate::survcore::Outcome;

pub const MODEL_FORMAT: &str = "survpipe-model";
pub const MODEL_VERSION: u32 = 1;

/// Points on the elastic-net path between λ_max and the target λ.
const ENET_PATH_POINTS: usize = 20;
/// Relative residual below which a centered column counts as a linear
/// combination of earlier ones.
const DEPENDENCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelBody {
    /// Cox-family models share one representation: coefficients, training
    /// means and a Breslow baseline, behind median / zero-one-hot imputation.
    Linear { impute: ImputeStats, cox: CoxModel },
    /// Single trees are one-tree forests without resampling.
    Forest(SurvForest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub features: Vec<String>,
    pub body: ModelBody,
}

#[derive(Serialize)]
struct Envelope<'a> {
    format: &'a str,
    version: u32,
    model: &'a FittedModel,
}

#[derive(Deserialize)]
struct OwnedEnvelope {
    format: String,
    version: u32,
    model: serde_json::Value,
}

/// Columns of the centered design that are not linear combinations of
/// earlier ones; constant columns are dropped too.
pub fn independent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let n = x.nrows() as f64;
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut keep = Vec::new();
    for (j, col) in x.column_iter().enumerate() {
        let mean = col.sum() / n;
        let mut v: DVector<f64> = col.map(|c| c - mean);
        let norm = v.norm();
        if norm == 0.0 {
            continue;
        }
        for q in &basis {
            let d = q.dot(&v);
            v.axpy(-d, q, 1.0);
        }
        let residual = v.norm();
        if residual > DEPENDENCE_TOL * norm {
            basis.push(v / residual);
            keep.push(j);
        }
    }
    keep
}

fn forest_params(spec: &ModelSpec, seed: u64) -> Option<ForestParams> {
    match *spec {
        ModelSpec::Tree {
            min_node_size,
            min_events_per_node,
        } => Some(ForestParams {
            master_seed: seed,
            ..ForestParams::single_tree(min_node_size, min_events_per_node)
        }),
        ModelSpec::Forest {
            n_trees,
            mtry,
            min_node_size,
            min_events_per_node,
        } => Some(ForestParams {
            n_trees,
            mtry,
            min_node_size,
            min_events_per_node,
            master_seed: seed,
            ..ForestParams::default()
        }),
        _ => None,
    }
}

fn linear_coefficients(
    spec: &ModelSpec,
    x: &DMatrix<f64>,
    outcomes: &[Outcome],
    names: &[String],
) -> Result<(Vec<f64>, Option<crate::linmodels::CoxDiagnostics>), PipelineError> {
    let p = x.ncols();
    match *spec {
        ModelSpec::Cox { max_iter, tol } => {
            let keep = independent_columns(x);
            let xs = x.select_columns(&keep);
            let kept: Vec<String> = keep.iter().map(|&j| names[j].clone()).collect();
            let options = CoxOptions {
                max_iter,
                tol,
                ..CoxOptions::default()
            };
            let fit = cox_fit(&xs, outcomes, &kept, &options)?;
            let mut beta = vec![0.0; p];
            for (&j, b) in keep.iter().zip(&fit.coefficients) {
                beta[j] = *b;
            }
            Ok((beta, fit.diagnostics))
        }
        ModelSpec::ElasticNet { alpha, lambda_ratio } => {
            let grid = LambdaGrid::Auto {
                n_lambda: ENET_PATH_POINTS,
                min_ratio: lambda_ratio,
            };
            let path = elastic_net_cox_fit(x, outcomes, names, alpha, &grid)?;
            let last = path.coefficients.len() - 1;
            Ok((path.coefficients[last].clone(), None))
        }
        ModelSpec::Boosted {
            step_size,
            iterations,
        } => Ok((coxboost_fit(x, outcomes, names, step_size, iterations)?.coefficients, None)),
        ModelSpec::Tree { .. } | ModelSpec::Forest { .. } => unreachable!("not a linear spec"),
    }
}

/// Fits `spec` on every row of `matrix`. `seed` drives the forest RNG.
pub(crate) fn fit_model(
    spec: &ModelSpec,
    matrix: &FeatureMatrix,
    outcomes: &[Outcome],
    seed: u64,
) -> Result<FittedModel, PipelineError> {
    if matrix.n_rows() != outcomes.len() {
        return Err(PipelineError::LengthMismatch {
            rows: matrix.n_rows(),
            outcomes: outcomes.len(),
        });
    }
    let names = matrix.column_names().to_vec();
    let body = if let Some(params) = forest_params(spec, seed) {
        ModelBody::Forest(fit_forest(matrix, outcomes, &params)?)
    } else {
        let impute = ImputeStats::fit(matrix, OneHotFill::Zero)?;
        let x = impute.apply(matrix)?;
        let (beta, diagnostics) = linear_coefficients(spec, &x, outcomes, &names)?;
        let mut cox = CoxModel::from_coefficients(&x, outcomes, names.clone(), beta)?;
        cox.diagnostics = diagnostics;
        ModelBody::Linear { impute, cox }
    };
    Ok(FittedModel {
        spec: spec.clone(),
        features: names,
        body,
    })
}

/// Fits the final model on all rows.
pub fn train_final(
    spec: &ModelSpec,
    matrix: &FeatureMatrix,
    outcomes: &[Outcome],
    seed: u64,
) -> Result<FittedModel, PipelineError> {
    fit_model(spec, matrix, outcomes, seed).map_err(|e| PipelineError::Fit {
        model: spec.tag(),
        source: Box::new(e),
    })
}

impl FittedModel {
    /// The model's columns of `matrix`, in training order.
    pub fn align(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix, PipelineError> {
        matrix
            .select_named(&self.features)
            .map_err(PipelineError::UnknownFeature)
    }

    /// Risk scores: linear predictor for Cox-family models, ensemble
    /// mortality for trees and forests.
    pub fn risk_scores(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>, PipelineError> {
        let m = self.align(matrix)?;
        match &self.body {
            ModelBody::Linear { impute, cox } => {
                let x = impute.apply(&m)?;
                (0..x.nrows())
                    .map(|r| {
                        let row: Vec<f64> = x.row(r).iter().copied().collect();
                        Ok(cox.linear_predictor(&row)?)
                    })
                    .collect()
            }
            ModelBody::Forest(forest) => (0..m.n_rows())
                .map(|r| Ok(forest.predict_mortality(m.row(r))?))
                .collect(),
        }
    }

    /// Death probability at `horizon` for one training-ordered row.
    fn death_probabilities(&self, row: &[f64], horizons: &[f64]) -> Result<Vec<f64>, PipelineError> {
        let probs: Vec<f64> = match &self.body {
            ModelBody::Linear { impute, cox } => {
                let mut row = row.to_vec();
                impute.apply_row(&mut row)?;
                let risk = cox.linear_predictor(&row)?.exp();
                horizons
                    .iter()
                    .map(|&t| -(-cox.baseline.eval(t) * risk).exp_m1())
                    .collect()
            }
            ModelBody::Forest(forest) => {
                let chf = forest.predict_chf(row)?;
                horizons.iter().map(|&t| -(-chf.eval(t)).exp_m1()).collect()
            }
        };
        Ok(probs.into_iter().map(|p| p.clamp(0.0, 1.0)).collect())
    }

    pub fn to_json(&self) -> Result<String, PipelineError> {
        Ok(serde_json::to_string(&Envelope {
            format: MODEL_FORMAT,
            version: MODEL_VERSION,
            model: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let env: OwnedEnvelope = serde_json::from_str(text)?;
        if env.format != MODEL_FORMAT || env.version != MODEL_VERSION {
            return Err(PipelineError::UnsupportedModel {
                format: env.format,
                version: env.version,
            });
        }
        Ok(serde_json::from_value(env.model)?)
    }
}

/// Death probabilities per subject and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub subject_ids: Vec<String>,
    pub horizons: Vec<f64>,
    /// `probabilities[i][h]`, nondecreasing in `h`.
    pub probabilities: Vec<Vec<f64>>,
}

impl PredictionSet {
    /// `subject_id,horizon_days,death_probability`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PipelineError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["subject_id", "horizon_days", "death_probability"])?;
        for (id, probs) in self.subject_ids.iter().zip(&self.probabilities) {
            for (h, p) in self.horizons.iter().zip(probs) {
                w.write_record([id.as_str(), &h.to_string(), &p.to_string()])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Death probability `1 − S(t | x)` for every row at every horizon.
/// Horizons must be non-negative and strictly ascending.
pub fn predict_death(
    model: &FittedModel,
    matrix: &FeatureMatrix,
    horizons: &[f64],
) -> Result<PredictionSet, PipelineError> {
    if horizons.is_empty() {
        return Err(PipelineError::EmptyHorizons);
    }
    if horizons.iter().any(|h| !(h.is_finite() && *h >= 0.0)) || horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PipelineError::BadHorizons);
    }
    let m = model.align(matrix)?;
    let probabilities = (0..m.n_rows())
        .map(|r| model.death_probabilities(m.row(r), horizons))
        .collect::<Result<_, _>>()?;
    Ok(PredictionSet {
        subject_ids: m.subject_ids().to_vec(),
        horizons: horizons.to_vec(),
        probabilities,
    })
}
