use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::partial::{neg_log_partial_likelihood, HessianMode, RiskSetOrder};
use super::CoxError;
use crate::survcore::{Outcome, StepFunction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoxOptions {
    pub max_iter: usize,
    /// Convergence when the gradient max-norm falls to this value.
    pub tol: f64,
    /// Any |coefficient × column standard deviation| above this signals
    /// separation.
    pub divergence_bound: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-8,
            divergence_bound: 50.0,
        }
    }
}

/// Newton steps larger than this (max-norm) mean the optimum is not reached
/// even when the gradient is already tiny.
const STEP_TOL: f64 = 1e-6;
const MAX_HALVINGS: usize = 40;
const ROUNDING: f64 = 64.0 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxDiagnostics {
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Objective after each accepted step, starting at the β = 0 value.
    pub objective_trace: Vec<f64>,
}

/// A fitted proportional hazards model.
///
/// `linear_predictor(x) = βᵀ(x − means)` and the baseline cumulative hazard
/// refers to a subject at the training means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub feature_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub means: Vec<f64>,
    pub baseline: StepFunction,
    pub diagnostics: Option<CoxDiagnostics>,
}

impl CoxModel {
    /// Wraps given coefficients with training means and a Breslow baseline.
    pub fn from_coefficients(
        x: &DMatrix<f64>,
        outcomes: &[Outcome],
        feature_names: Vec<String>,
        coefficients: Vec<f64>,
    ) -> Result<Self, CoxError> {
        check_shapes(x, outcomes, &feature_names)?;
        if coefficients.len() != x.ncols() {
            return Err(CoxError::DimensionMismatch {
                expected: x.ncols(),
                got: coefficients.len(),
            });
        }
        let means = column_means(x);
        let baseline = breslow_baseline(x, outcomes, &coefficients, &means)?;
        Ok(Self {
            feature_names,
            coefficients,
            means,
            baseline,
            diagnostics: None,
        })
    }

    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    pub fn linear_predictor(&self, row: &[f64]) -> Result<f64, CoxError> {
        if row.len() != self.coefficients.len() {
            return Err(CoxError::DimensionMismatch {
                expected: self.coefficients.len(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(&self.means)
            .zip(&self.coefficients)
            .map(|((x, m), b)| b * (x - m))
            .sum())
    }

    /// Survival probability `exp(-H0(t) * exp(lp))` at `horizon_days`.
    pub fn predict_survival(&self, row: &[f64], horizon_days: f64) -> Result<f64, CoxError> {
        let lp = self.linear_predictor(row)?;
        Ok((-self.baseline.eval(horizon_days) * lp.exp()).exp())
    }

    /// Column indices of this model's features in `columns`.
    pub fn align(&self, columns: &[String]) -> Result<Vec<usize>, CoxError> {
        self.feature_names
            .iter()
            .map(|f| {
                columns
                    .iter()
                    .position(|c| c == f)
                    .ok_or_else(|| CoxError::UnknownFeature(f.clone()))
            })
            .collect()
    }
}

pub fn cox_predict_survival(model: &CoxModel, row: &[f64], horizon_days: f64) -> Result<f64, CoxError> {
    model.predict_survival(row, horizon_days)
}

pub(crate) fn check_shapes(
    x: &DMatrix<f64>,
    outcomes: &[Outcome],
    names: &[String],
) -> Result<(), CoxError> {
    if x.nrows() != outcomes.len() {
        return Err(CoxError::DimensionMismatch {
            expected: outcomes.len(),
            got: x.nrows(),
        });
    }
    if names.len() != x.ncols() {
        return Err(CoxError::DimensionMismatch {
            expected: x.ncols(),
            got: names.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CoxError::NonFinite);
    }
    Ok(())
}

pub(crate) fn column_means(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows().max(1) as f64;
    x.column_iter().map(|c| c.sum() / n).collect()
}

pub(crate) fn centered(x: &DMatrix<f64>, means: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| x[(r, c)] - means[c])
}

/// Breslow estimate of the baseline cumulative hazard for a subject at the
/// covariate means: at each event time, deaths over Σ exp(lp) of the risk set.
pub fn breslow_baseline(
    x: &DMatrix<f64>,
    outcomes: &[Outcome],
    beta: &[f64],
    means: &[f64],
) -> Result<StepFunction, CoxError> {
    let n = outcomes.len();
    let risk: Vec<f64> = (0..n)
        .map(|i| {
            let lp: f64 = (0..beta.len()).map(|j| beta[j] * (x[(i, j)] - means[j])).sum();
            lp.exp()
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| outcomes[b].time.total_cmp(&outcomes[a].time));

    // walk from the latest time down, accumulating the risk-set denominator
    let mut knots = Vec::new();
    let mut increments = Vec::new();
    let mut denom = 0.0;
    let mut k = 0;
    while k < n {
        let t = outcomes[order[k]].time;
        let mut deaths = 0usize;
        let mut end = k;
        while end < n && outcomes[order[end]].time == t {
            denom += risk[order[end]];
            deaths += usize::from(outcomes[order[end]].event);
            end += 1;
        }
        if deaths > 0 {
            knots.push(t);
            increments.push(deaths as f64 / denom);
        }
        k = end;
    }
    if knots.is_empty() {
        return Err(CoxError::NoEvents);
    }
    knots.reverse();
    increments.reverse();
    let mut h = 0.0;
    let values = increments
        .into_iter()
        .map(|inc| {
            h += inc;
            h
        })
        .collect();
    Ok(StepFunction::new(knots, values, 0.0))
}

/// Newton–Raphson fit of the Efron partial likelihood from β = 0 with
/// step-halving, followed by the Breslow baseline.
pub fn cox_fit(
    x: &DMatrix<f64>,
    outcomes: &[Outcome],
    feature_names: &[String],
    options: &CoxOptions,
) -> Result<CoxModel, CoxError> {
    check_shapes(x, outcomes, feature_names)?;
    let risk = RiskSetOrder::new(outcomes)?;
    for (j, col) in x.column_iter().enumerate() {
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            return Err(CoxError::DegenerateColumn(feature_names[j].clone()));
        }
    }
    let means = column_means(x);
    let xc = centered(x, &means);
    let p = x.ncols();
    let n = x.nrows() as f64;
    let spreads: Vec<f64> = xc
        .column_iter()
        .map(|c| (c.norm_squared() / n).sqrt())
        .collect();

    let mut beta = vec![0.0; p];
    let mut current = neg_log_partial_likelihood(&beta, &xc, &risk, HessianMode::Full);
    let mut trace = vec![current.value];
    let mut iterations = 0;

    loop {
        let grad_norm = current.gradient.amax();
        let step = match newton_step(&current.hessian, &current.gradient) {
            Ok(s) => s,
            // information that collapses only after coefficients have moved
            // means the likelihood is flattening out toward infinity
            Err(CoxError::SingularInformation) if iterations > 0 => {
                let j = (0..p).max_by(|&a, &b| beta[a].abs().total_cmp(&beta[b].abs())).unwrap_or(0);
                return Err(CoxError::Separation {
                    feature: feature_names[j].clone(),
                    iteration: iterations,
                });
            }
            Err(e) => return Err(e),
        };
        let step_norm = step.amax();
        if grad_norm <= options.tol && step_norm <= STEP_TOL {
            break;
        }
        if iterations >= options.max_iter {
            // a vanishing gradient with steps that refuse to shrink is the
            // signature of a monotone likelihood
            if grad_norm <= options.tol {
                let j = step.iamax();
                return Err(CoxError::Separation {
                    feature: feature_names[j].clone(),
                    iteration: iterations,
                });
            }
            return Err(CoxError::NotConverged {
                iterations,
                gradient_norm: grad_norm,
            });
        }
        iterations += 1;

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            let eval = neg_log_partial_likelihood(&trial, &xc, &risk, HessianMode::Full);
            // near the optimum the objective only moves at rounding level,
            // so a shrinking gradient decides
            let flat = eval.value - current.value <= ROUNDING * current.value.abs()
                && eval.gradient.amax() < current.gradient.amax();
            if eval.value.is_finite() && (eval.value <= current.value || flat) {
                accepted = Some((trial, eval));
                break;
            }
            scale *= 0.5;
        }
        let Some((trial, eval)) = accepted else {
            return Err(CoxError::NotConverged {
                iterations,
                gradient_norm: grad_norm,
            });
        };
        if let Some(j) = (0..p).position(|j| (trial[j] * spreads[j]).abs() > options.divergence_bound) {
            return Err(CoxError::Separation {
                feature: feature_names[j].clone(),
                iteration: iterations,
            });
        }
        beta = trial;
        current = eval;
        trace.push(current.value);
    }

    let baseline = breslow_baseline(x, outcomes, &beta, &means)?;
    Ok(CoxModel {
        feature_names: feature_names.to_vec(),
        coefficients: beta,
        means,
        baseline,
        diagnostics: Some(CoxDiagnostics {
            iterations,
            gradient_norm: current.gradient.amax(),
            objective_trace: trace,
        }),
    })
}

/// Solves `H s = -g`.
fn newton_step(hessian: &DMatrix<f64>, gradient: &DVector<f64>) -> Result<DVector<f64>, CoxError> {
    let rhs = -gradient;
    if let Some(chol) = hessian.clone().cholesky() {
        return Ok(chol.solve(&rhs));
    }
    hessian
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or(CoxError::SingularInformation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survcore::nelson_aalen;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("x{j}")).collect()
    }

    #[test]
    fn constant_column_is_degenerate() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 1.0]);
        let out = [Outcome::event(1.0), Outcome::event(2.0), Outcome::censored(3.0)];
        assert!(matches!(
            cox_fit(&x, &out, &names(1), &CoxOptions::default()),
            Err(CoxError::DegenerateColumn(_))
        ));
    }

    #[test]
    fn perfectly_ordered_pair_separates() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let out = [Outcome::event(1.0), Outcome::event(2.0)];
        let err = cox_fit(&x, &out, &names(1), &CoxOptions::default()).unwrap_err();
        assert!(matches!(err, CoxError::Separation { .. }), "{err:?}");
    }

    #[test]
    fn breslow_at_zero_is_nelson_aalen() {
        let out = [
            Outcome::event(1.0),
            Outcome::censored(2.0),
            Outcome::event(2.0),
            Outcome::event(2.0),
            Outcome::event(5.0),
            Outcome::censored(6.0),
        ];
        let x = DMatrix::from_column_slice(6, 1, &[0.1, 0.5, -0.3, 1.2, 0.0, 0.9]);
        let means = column_means(&x);
        let h0 = breslow_baseline(&x, &out, &[0.0], &means).unwrap();
        let na = nelson_aalen(&out).unwrap();
        assert_eq!(h0.knots(), na.knots());
        for (a, b) in h0.values().iter().zip(na.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn prediction_identities() {
        let x = DMatrix::from_column_slice(5, 1, &[0.0, 1.0, 0.0, 1.0, 1.0]);
        let out = [
            Outcome::event(1.0),
            Outcome::event(2.0),
            Outcome::censored(3.0),
            Outcome::event(4.0),
            Outcome::event(5.0),
        ];
        let m = cox_fit(&x, &out, &names(1), &CoxOptions::default()).unwrap();
        assert_eq!(m.predict_survival(&[1.0], 0.0).unwrap(), 1.0);
        let at_mean = m.predict_survival(&m.means.clone(), 4.0).unwrap();
        assert_eq!(at_mean, (-m.baseline.eval(4.0)).exp());

        let null = CoxModel::from_coefficients(&x, &out, names(1), vec![0.0]).unwrap();
        let a = null.predict_survival(&[0.0], 4.5).unwrap();
        let b = null.predict_survival(&[1.0], 4.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_feature_alignment() {
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let out = [Outcome::event(1.0), Outcome::censored(2.0)];
        let m = CoxModel::from_coefficients(&x, &out, vec!["age".into()], vec![0.1]).unwrap();
        assert_eq!(m.align(&["x".into(), "age".into()]).unwrap(), vec![1]);
        assert!(matches!(m.align(&["x".into()]), Err(CoxError::UnknownFeature(_))));
    }
}
