//! Elastic-net penalized Cox regression along a descending λ path.
//!
//! Objective per λ, on internally standardized columns:
//!
//! ```text
//! (1/n)·NLL(β) + λ·(α‖β‖₁ + (1−α)/2·‖β‖₂²)
//! ```
//!
//! Solved by proximal Newton: a full second-order model of the smooth part,
//! minimized with cyclic coordinate descent, then a backtracking line search
//! on the penalized objective. Every returned solution carries its KKT
//! subgradient residual.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cox::check_shapes;
use super::partial::{neg_log_partial_likelihood, HessianMode, RiskSetOrder};
use super::CoxError;
use crate::survcore::Outcome;

/// Certificate every returned solution must satisfy.
pub const KKT_TOLERANCE: f64 = 1e-4;
/// What the solver aims for internally.
const KKT_TARGET: f64 = 1e-9;
const MAX_OUTER: usize = 200;
const MAX_SWEEPS: usize = 10_000;
/// Stand-in mixing value for the λ_max formula when α = 0.
const RIDGE_ALPHA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LambdaGrid {
    /// `n_lambda` log-spaced points from λ_max down to `min_ratio · λ_max`.
    Auto { n_lambda: usize, min_ratio: f64 },
    /// Explicit values; sorted descending before fitting.
    Given(Vec<f64>),
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Auto {
            n_lambda: 100,
            min_ratio: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenalizedCoxPath {
    pub feature_names: Vec<String>,
    pub alpha: f64,
    pub lambda_max: f64,
    /// Descending.
    pub lambdas: Vec<f64>,
    /// Per λ, on the input scale.
    pub coefficients: Vec<Vec<f64>>,
    /// Per λ, on the standardized scale.
    pub standardized: Vec<Vec<f64>>,
    pub kkt_residuals: Vec<f64>,
    pub nonzero: Vec<usize>,
    pub means: Vec<f64>,
    /// Population standard deviations; 0 marks a constant column.
    pub scales: Vec<f64>,
}

impl PenalizedCoxPath {
    /// Grid index whose λ is closest to `ratio · λ_max` on the log scale.
    pub fn index_for_ratio(&self, ratio: f64) -> usize {
        let target = (ratio * self.lambda_max).ln();
        let mut best = 0;
        for (i, l) in self.lambdas.iter().enumerate() {
            if (l.ln() - target).abs() < (self.lambdas[best].ln() - target).abs() {
                best = i;
            }
        }
        best
    }

    /// The largest λ at which each feature is nonzero, `None` if never.
    pub fn entry_lambdas(&self) -> Vec<Option<f64>> {
        (0..self.feature_names.len())
            .map(|j| {
                self.lambdas
                    .iter()
                    .zip(&self.standardized)
                    .find(|(_, b)| b[j] != 0.0)
                    .map(|(l, _)| *l)
            })
            .collect()
    }
}

/// Column means and population standard deviations.
pub(crate) fn standardization(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let means: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
    let scales = x
        .column_iter()
        .zip(&means)
        .map(|(c, m)| {
            let first = c[0];
            if c.iter().all(|&v| v == first) {
                0.0
            } else {
                (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
            }
        })
        .collect();
    (means, scales)
}

pub(crate) fn standardize(x: &DMatrix<f64>, means: &[f64], scales: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| {
        if scales[c] > 0.0 {
            (x[(r, c)] - means[c]) / scales[c]
        } else {
            0.0
        }
    })
}

fn penalty(beta: &[f64], lambda: f64, alpha: f64) -> f64 {
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    lambda * (alpha * l1 + 0.5 * (1.0 - alpha) * l2)
}

/// Max-norm of the KKT subgradient residual. `grad` is the gradient of the
/// smooth part; constant columns are ignored.
pub fn kkt_residual(beta: &[f64], grad: &[f64], lambda: f64, alpha: f64, active: &[bool]) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..beta.len() {
        if !active[j] {
            continue;
        }
        let r = if beta[j] != 0.0 {
            (grad[j] + lambda * (alpha * beta[j].signum() + (1.0 - alpha) * beta[j])).abs()
        } else {
            (grad[j].abs() - lambda * alpha).max(0.0)
        };
        worst = worst.max(r);
    }
    worst
}

struct Smooth<'a> {
    x: &'a DMatrix<f64>,
    risk: &'a RiskSetOrder,
    n: f64,
}

impl Smooth<'_> {
    fn eval(&self, beta: &[f64], mode: HessianMode) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = neg_log_partial_likelihood(beta, self.x, self.risk, mode);
        (d.value / self.n, d.gradient / self.n, d.hessian / self.n)
    }
}

pub fn elastic_net_cox_fit(
    x: &DMatrix<f64>,
    outcomes: &[Outcome],
    feature_names: &[String],
    alpha: f64,
    grid: &LambdaGrid,
) -> Result<PenalizedCoxPath, CoxError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CoxError::BadParameter(format!("alpha {alpha} outside [0, 1]")));
    }
    check_shapes(x, outcomes, feature_names)?;
    let risk = RiskSetOrder::new(outcomes)?;
    let (means, scales) = standardization(x);
    let xs = standardize(x, &means, &scales);
    let active: Vec<bool> = scales.iter().map(|&s| s > 0.0).collect();
    let p = x.ncols();
    let smooth = Smooth {
        x: &xs,
        risk: &risk,
        n: x.nrows() as f64,
    };

    let (_, g0, _) = smooth.eval(&vec![0.0; p], HessianMode::None);
    let max_score = g0
        .iter()
        .zip(&active)
        .filter(|(_, &a)| a)
        .map(|(g, _)| g.abs())
        .fold(0.0, f64::max);
    let lambda_max = max_score / alpha.max(RIDGE_ALPHA_FLOOR);

    let lambdas = match grid {
        LambdaGrid::Auto { n_lambda, min_ratio } => {
            if *n_lambda == 0 || !(*min_ratio > 0.0 && *min_ratio < 1.0) {
                return Err(CoxError::BadParameter("bad automatic lambda grid".into()));
            }
            if lambda_max <= 0.0 {
                vec![0.0; *n_lambda]
            } else {
                let top = lambda_max.ln();
                let bottom = (lambda_max * min_ratio).ln();
                (0..*n_lambda)
                    .map(|k| {
                        if *n_lambda == 1 {
                            lambda_max
                        } else {
                            (top + (bottom - top) * k as f64 / (*n_lambda - 1) as f64).exp()
                        }
                    })
                    .collect()
            }
        }
        LambdaGrid::Given(values) => {
            if values.is_empty() || values.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                return Err(CoxError::BadParameter("lambdas must be finite and >= 0".into()));
            }
            let mut v = values.clone();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        }
    };

    let mut beta = vec![0.0; p];
    let mut path = PenalizedCoxPath {
        feature_names: feature_names.to_vec(),
        alpha,
        lambda_max,
        lambdas: lambdas.clone(),
        coefficients: Vec::with_capacity(lambdas.len()),
        standardized: Vec::with_capacity(lambdas.len()),
        kkt_residuals: Vec::with_capacity(lambdas.len()),
        nonzero: Vec::with_capacity(lambdas.len()),
        means,
        scales: scales.clone(),
    };
    for &lambda in &lambdas {
        let residual = solve_one(&smooth, &mut beta, lambda, alpha, &active)?;
        path.coefficients.push(
            beta.iter()
                .zip(&scales)
                .map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 })
                .collect(),
        );
        path.nonzero.push(beta.iter().filter(|b| **b != 0.0).count());
        path.standardized.push(beta.clone());
        path.kkt_residuals.push(residual);
    }
    Ok(path)
}

/// Proximal Newton for one λ, warm-started at `beta`. Returns the KKT residual.
fn solve_one(
    smooth: &Smooth<'_>,
    beta: &mut Vec<f64>,
    lambda: f64,
    alpha: f64,
    active: &[bool],
) -> Result<f64, CoxError> {
    let p = beta.len();
    let l1 = lambda * alpha;
    let l2 = lambda * (1.0 - alpha);

    for _ in 0..MAX_OUTER {
        let (f, g, h) = smooth.eval(beta, HessianMode::Full);
        let g: Vec<f64> = g.iter().copied().collect();
        let residual = kkt_residual(beta, &g, lambda, alpha, active);
        if residual <= KKT_TARGET {
            return Ok(residual);
        }

        // coordinate descent on the local quadratic model
        let mut b = beta.clone();
        let mut r = g.clone(); // gradient of the quadratic at b
        for _ in 0..MAX_SWEEPS {
            let mut max_change: f64 = 0.0;
            for j in 0..p {
                if !active[j] {
                    continue;
                }
                let c = h[(j, j)];
                let denom = c + l2;
                let z = if denom > 0.0 {
                    soft_threshold(c * b[j] - r[j], l1) / denom
                } else {
                    0.0
                };
                let delta = z - b[j];
                if delta != 0.0 {
                    for k in 0..p {
                        r[k] += h[(k, j)] * delta;
                    }
                    b[j] = z;
                    max_change = max_change.max(delta.abs() * c.max(1.0).sqrt());
                }
            }
            if max_change < 1e-13 {
                break;
            }
        }

        let direction: Vec<f64> = b.iter().zip(beta.iter()).map(|(x, y)| x - y).collect();
        let objective = f + penalty(beta, lambda, alpha);
        let decrease: f64 = g.iter().zip(&direction).map(|(gi, di)| gi * di).sum::<f64>()
            + penalty(&b, lambda, alpha)
            - penalty(beta, lambda, alpha);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial: Vec<f64> = beta.iter().zip(&direction).map(|(x, d)| x + t * d).collect();
            let (ft, _, _) = smooth.eval(&trial, HessianMode::None);
            let obj = ft + penalty(&trial, lambda, alpha);
            if obj.is_finite() && obj <= objective + 1e-4 * t * decrease.min(0.0) {
                moved = trial != *beta;
                *beta = trial;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            // no further progress representable; accept if certified
            return if residual <= KKT_TOLERANCE {
                Ok(residual)
            } else {
                Err(CoxError::NonConvergence { lambda })
            };
        }
    }
    let (_, g, _) = smooth.eval(beta, HessianMode::None);
    let g: Vec<f64> = g.iter().copied().collect();
    let residual = kkt_residual(beta, &g, lambda, alpha, active);
    if residual <= KKT_TOLERANCE {
        Ok(residual)
    } else {
        Err(CoxError::NonConvergence { lambda })
    }
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}
