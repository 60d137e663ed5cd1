//! Negative log partial likelihood of the proportional hazards model with
//! Efron's correction for tied event times, and its exact derivatives.

use nalgebra::{DMatrix, DVector};

use super::CoxError;
use crate::survcore::Outcome;

/// Which second derivatives to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianMode {
    None,
    Diagonal,
    Full,
}

#[derive(Debug, Clone)]
pub struct Derivatives {
    pub value: f64,
    pub gradient: DVector<f64>,
    /// p × p for [`HessianMode::Full`], p × 1 holding the diagonal for
    /// [`HessianMode::Diagonal`], empty otherwise.
    pub hessian: DMatrix<f64>,
}

/// Subjects grouped by distinct observed time, latest time first. Built once
/// per data set and reused across evaluations.
#[derive(Debug, Clone)]
pub struct RiskSetOrder {
    order: Vec<usize>,
    /// `order[groups[k]..groups[k + 1]]` share one observed time.
    groups: Vec<usize>,
    events: Vec<bool>,
}

impl RiskSetOrder {
    pub fn new(outcomes: &[Outcome]) -> Result<Self, CoxError> {
        if !outcomes.iter().any(|o| o.event) {
            return Err(CoxError::NoEvents);
        }
        let mut order: Vec<usize> = (0..outcomes.len()).collect();
        order.sort_by(|&a, &b| outcomes[b].time.total_cmp(&outcomes[a].time).then(a.cmp(&b)));
        let mut groups = vec![0];
        for k in 1..order.len() {
            if outcomes[order[k]].time != outcomes[order[k - 1]].time {
                groups.push(k);
            }
        }
        groups.push(order.len());
        Ok(Self {
            order,
            groups,
            events: outcomes.iter().map(|o| o.event).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Value and derivatives of the Efron negative log partial likelihood at
/// `beta`. `x` is n × p. The Hessian is positive semidefinite.
pub fn neg_log_partial_likelihood(
    beta: &[f64],
    x: &DMatrix<f64>,
    risk: &RiskSetOrder,
    mode: HessianMode,
) -> Derivatives {
    let (n, p) = x.shape();
    assert_eq!(n, risk.len(), "row count differs from outcome count");
    assert_eq!(p, beta.len(), "coefficient length differs from column count");

    let eta: Vec<f64> = (0..n)
        .map(|i| (0..p).map(|j| x[(i, j)] * beta[j]).sum())
        .collect();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shift = if shift.is_finite() { shift } else { 0.0 };
    let w: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();

    let full = mode == HessianMode::Full;
    let diag = mode == HessianMode::Diagonal;
    let h_len = if full { p * p } else if diag { p } else { 0 };

    // running sums over the risk set
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![0.0; h_len];
    // sums over the deaths at the current time
    let mut d1 = vec![0.0; p];
    let mut d2 = vec![0.0; h_len];
    let mut num1 = vec![0.0; p];

    let mut value = 0.0;
    let mut grad = vec![0.0; p];
    let mut hess = vec![0.0; h_len];

    let accumulate = |sum1: &mut [f64], sum2: &mut [f64], i: usize, wi: f64| {
        for j in 0..p {
            sum1[j] += wi * x[(i, j)];
        }
        if full {
            for j in 0..p {
                let xj = wi * x[(i, j)];
                for k in 0..=j {
                    sum2[j * p + k] += xj * x[(i, k)];
                }
            }
        } else if diag {
            for j in 0..p {
                sum2[j] += wi * x[(i, j)] * x[(i, j)];
            }
        }
    };

    for g in risk.groups.windows(2) {
        let members = &risk.order[g[0]..g[1]];
        let mut deaths = 0usize;
        let mut d0 = 0.0;
        d1.iter_mut().for_each(|v| *v = 0.0);
        d2.iter_mut().for_each(|v| *v = 0.0);
        for &i in members {
            s0 += w[i];
            accumulate(&mut s1, &mut s2, i, w[i]);
            if risk.events[i] {
                deaths += 1;
                d0 += w[i];
                accumulate(&mut d1, &mut d2, i, w[i]);
                value -= eta[i];
                for j in 0..p {
                    grad[j] -= x[(i, j)];
                }
            }
        }
        if deaths == 0 {
            continue;
        }
        for l in 0..deaths {
            let frac = l as f64 / deaths as f64;
            let den = s0 - frac * d0;
            value += den.ln() + shift;
            for j in 0..p {
                num1[j] = s1[j] - frac * d1[j];
                grad[j] += num1[j] / den;
            }
            if full {
                for j in 0..p {
                    for k in 0..=j {
                        let idx = j * p + k;
                        let num2 = s2[idx] - frac * d2[idx];
                        hess[idx] += num2 / den - num1[j] * num1[k] / (den * den);
                    }
                }
            } else if diag {
                for j in 0..p {
                    let num2 = s2[j] - frac * d2[j];
                    hess[j] += num2 / den - num1[j] * num1[j] / (den * den);
                }
            }
        }
    }

    let hessian = if full {
        let mut h = DMatrix::zeros(p, p);
        for j in 0..p {
            for k in 0..=j {
                h[(j, k)] = hess[j * p + k];
                h[(k, j)] = hess[j * p + k];
            }
        }
        h
    } else if diag {
        DMatrix::from_vec(p, 1, hess)
    } else {
        DMatrix::zeros(0, 0)
    };

    Derivatives {
        value,
        gradient: DVector::from_vec(grad),
        hessian,
    }
}

/// Breslow-form value (no tie correction); used only to check that both forms
/// agree on tie-free data.
#[cfg(test)]
pub(crate) fn breslow_value(beta: &[f64], x: &DMatrix<f64>, outcomes: &[Outcome]) -> f64 {
    let n = outcomes.len();
    let eta: Vec<f64> = (0..n)
        .map(|i| (0..beta.len()).map(|j| x[(i, j)] * beta[j]).sum())
        .collect();
    let mut v = 0.0;
    for i in 0..n {
        if !outcomes[i].event {
            continue;
        }
        let s: f64 = (0..n)
            .filter(|&k| outcomes[k].time >= outcomes[i].time)
            .map(|k| eta[k].exp())
            .sum();
        v += s.ln() - eta[i];
    }
    v
}
