//! Survival statistics shared by every model: risk tables, the product-limit
//! and Nelson–Aalen estimators, and Harrell's concordance index.
//!
//! Tied-time conventions used throughout the crate:
//!
//! * A subject censored at an event time is still at risk at that time
//!   ("censored just after").
//! * In the concordance index, pairs with equal observed times are never
//!   comparable, whatever their event flags. Implementations disagree here;
//!   this is the plainest form of Harrell's rule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurvError {
    #[error("no events observed: every outcome is censored")]
    NoEvents,
    #[error("no permissible pairs for the concordance index")]
    NoPermissiblePairs,
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("risk score {index} is not finite")]
    NonFiniteScore { index: usize },
}

/// A right-censored observation: observed time and whether death was seen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub time: f64,
    pub event: bool,
}

impl Outcome {
    pub fn new(time: f64, event: bool) -> Self {
        Self { time, event }
    }

    pub fn event(time: f64) -> Self {
        Self { time, event: true }
    }

    pub fn censored(time: f64) -> Self {
        Self { time, event: false }
    }
}

/// Right-continuous piecewise-constant function of time.
///
/// Before the first knot the function takes `initial` (1 for survival curves,
/// 0 for cumulative hazards).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    knots: Vec<f64>,
    values: Vec<f64>,
    initial: f64,
}

impl StepFunction {
    /// Panics when `knots` and `values` differ in length or the knots are not
    /// strictly increasing.
    pub fn new(knots: Vec<f64>, values: Vec<f64>, initial: f64) -> Self {
        assert_eq!(knots.len(), values.len(), "knots and values differ in length");
        assert!(
            knots.windows(2).all(|w| w[0] < w[1]),
            "knots must be strictly increasing"
        );
        Self {
            knots,
            values,
            initial,
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// Value at `t`: the value of the last knot `<= t`.
    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.knots.partition_point(|&k| k <= t);
        if idx == 0 {
            self.initial
        } else {
            self.values[idx - 1]
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> StepFunction {
        StepFunction {
            knots: self.knots.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            initial: f(self.initial),
        }
    }
}

/// Counts at each distinct event time.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskTable {
    pub times: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
    /// Subjects censored in `[times[k], times[k+1])`.
    pub censored: Vec<usize>,
}

impl RiskTable {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub fn risk_table(outcomes: &[Outcome]) -> Result<RiskTable, SurvError> {
    let mut sorted: Vec<Outcome> = outcomes.to_vec();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));

    let mut table = RiskTable {
        times: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
        censored: Vec::new(),
    };
    let n = sorted.len();
    let mut i = 0;
    while i < n {
        let t = sorted[i].time;
        let mut j = i;
        let mut deaths = 0;
        let mut cens = 0;
        while j < n && sorted[j].time == t {
            if sorted[j].event {
                deaths += 1;
            } else {
                cens += 1;
            }
            j += 1;
        }
        if deaths > 0 {
            table.times.push(t);
            table.at_risk.push(n - i);
            table.events.push(deaths);
            table.censored.push(cens);
        } else if let Some(last) = table.censored.last_mut() {
            *last += cens;
        }
        i = j;
    }
    if table.is_empty() {
        return Err(SurvError::NoEvents);
    }
    Ok(table)
}

/// Product-limit estimate of the survival function.
pub fn kaplan_meier(outcomes: &[Outcome]) -> Result<StepFunction, SurvError> {
    let table = risk_table(outcomes)?;
    let mut s = 1.0;
    let values = table
        .events
        .iter()
        .zip(&table.at_risk)
        .map(|(&d, &n)| {
            s *= 1.0 - d as f64 / n as f64;
            s
        })
        .collect();
    Ok(StepFunction::new(table.times, values, 1.0))
}

/// Nelson–Aalen estimate of the cumulative hazard.
pub fn nelson_aalen(outcomes: &[Outcome]) -> Result<StepFunction, SurvError> {
    let table = risk_table(outcomes)?;
    let mut h = 0.0;
    let values = table
        .events
        .iter()
        .zip(&table.at_risk)
        .map(|(&d, &n)| {
            h += d as f64 / n as f64;
            h
        })
        .collect();
    Ok(StepFunction::new(table.times, values, 0.0))
}

/// Harrell's concordance index. Higher score means higher predicted risk.
///
/// A pair is permissible when the subject with the strictly shorter observed
/// time had an event. It scores 1 when that subject has the strictly higher
/// risk score, 0.5 on a score tie, 0 otherwise.
///
/// Runs in `O(n log n)` with a Fenwick tree over score ranks.
pub fn concordance_index(scores: &[f64], outcomes: &[Outcome]) -> Result<f64, SurvError> {
    let (concordant2, permissible) = concordance_counts(scores, outcomes)?;
    if permissible == 0 {
        return Err(SurvError::NoPermissiblePairs);
    }
    Ok(concordant2 as f64 / (2 * permissible) as f64)
}

/// Returns (2 × concordant weight, permissible pair count), both exact.
pub(crate) fn concordance_counts(
    scores: &[f64],
    outcomes: &[Outcome],
) -> Result<(u64, u64), SurvError> {
    let n = outcomes.len();
    if scores.len() != n {
        return Err(SurvError::LengthMismatch {
            what: "scores",
            got: scores.len(),
            expected: n,
        });
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(SurvError::NonFiniteScore { index });
    }

    // dense score ranks, 1-based for the Fenwick tree
    let mut by_score: Vec<usize> = (0..n).collect();
    by_score.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank = vec![0usize; n];
    let mut r = 0;
    for (pos, &i) in by_score.iter().enumerate() {
        if pos == 0 || scores[i] != scores[by_score[pos - 1]] {
            r += 1;
        }
        rank[i] = r;
    }
    let mut tree = Fenwick::new(r);

    let mut by_time: Vec<usize> = (0..n).collect();
    by_time.sort_by(|&a, &b| outcomes[b].time.total_cmp(&outcomes[a].time));

    let mut concordant2 = 0u64;
    let mut permissible = 0u64;
    let mut inserted = 0u64;
    let mut start = 0;
    while start < n {
        let t = outcomes[by_time[start]].time;
        let mut end = start;
        while end < n && outcomes[by_time[end]].time == t {
            end += 1;
        }
        // the tree holds exactly the subjects with time > t
        for &i in &by_time[start..end] {
            if !outcomes[i].event {
                continue;
            }
            let lower = tree.prefix(rank[i] - 1);
            let equal = tree.prefix(rank[i]) - lower;
            permissible += inserted;
            concordant2 += 2 * lower + equal;
        }
        for &i in &by_time[start..end] {
            tree.add(rank[i]);
            inserted += 1;
        }
        start = end;
    }
    Ok((concordant2, permissible))
}

struct Fenwick {
    counts: Vec<u64>,
}

impl Fenwick {
    fn new(size: usize) -> Self {
        Self {
            counts: vec![0; size + 1],
        }
    }

    fn add(&mut self, mut idx: usize) {
        while idx < self.counts.len() {
            self.counts[idx] += 1;
            idx += idx & idx.wrapping_neg();
        }
    }

    fn prefix(&self, mut idx: usize) -> u64 {
        let mut total = 0;
        while idx > 0 {
            total += self.counts[idx];
            idx -= idx & idx.wrapping_neg();
        }
        total
    }
}
