use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::logrank::statistic_from_counts;
use super::ForestParams;
use crate::survcore::{nelson_aalen, Outcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SurvTreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Where a missing value goes. Inputs are imputed before growing and
        /// predicting, so this only matters for raw NaN rows.
        missing_left: bool,
    },
    Leaf {
        /// Nelson–Aalen cumulative hazard of the members as `(grid index,
        /// value from there on)`; zero before the first jump.
        jumps: Vec<(u32, f64)>,
        n_members: usize,
        n_events: usize,
        /// Sum of the hazard over the forest grid.
        mortality: f64,
    },
}

/// Adds a leaf's hazard, evaluated on the whole grid, into `acc`.
pub(crate) fn add_jumps(jumps: &[(u32, f64)], acc: &mut [f64]) {
    for (k, &(start, value)) in jumps.iter().enumerate() {
        let end = jumps.get(k + 1).map_or(acc.len(), |&(e, _)| e as usize);
        for a in &mut acc[start as usize..end] {
            *a += value;
        }
    }
}

fn jumps_sum(jumps: &[(u32, f64)], grid_len: usize) -> f64 {
    let mut total = 0.0;
    for (k, &(start, value)) in jumps.iter().enumerate() {
        let end = jumps.get(k + 1).map_or(grid_len, |&(e, _)| e as usize);
        total += value * (end - start as usize) as f64;
    }
    total
}

/// Nodes in preorder; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvTree {
    pub nodes: Vec<SurvTreeNode>,
}

impl SurvTree {
    /// Index of the leaf reached by a row; `value(f)` returns feature `f`.
    pub fn leaf_index(&self, value: impl Fn(usize) -> f64) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                SurvTreeNode::Leaf { .. } => return at,
                SurvTreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    missing_left,
                } => {
                    let v = value(*feature);
                    let go_left = if v.is_nan() { *missing_left } else { v <= *threshold };
                    at = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn leaf(&self, value: impl Fn(usize) -> f64) -> &SurvTreeNode {
        &self.nodes[self.leaf_index(value)]
    }

    /// Hazard of the leaf reached by `row` on a grid of `grid_len` points.
    pub fn leaf_chf(&self, row: &[f64], grid_len: usize) -> Vec<f64> {
        let mut acc = vec![0.0; grid_len];
        self.add_leaf_chf(row, &mut acc);
        acc
    }

    pub(crate) fn add_leaf_chf(&self, row: &[f64], acc: &mut [f64]) {
        match self.leaf(|f| row[f]) {
            SurvTreeNode::Leaf { jumps, .. } => add_jumps(jumps, acc),
            SurvTreeNode::Split { .. } => unreachable!("leaf_index stops at leaves"),
        }
    }

    pub fn leaf_mortality(&self, value: impl Fn(usize) -> f64) -> f64 {
        match self.leaf(value) {
            SurvTreeNode::Leaf { mortality, .. } => *mortality,
            SurvTreeNode::Split { .. } => unreachable!("leaf_index stops at leaves"),
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = &SurvTreeNode> {
        self.nodes
            .iter()
            .filter(|n| matches!(n, SurvTreeNode::Leaf { .. }))
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().count()
    }
}

struct Grower<'a, R> {
    x: &'a DMatrix<f64>,
    outcomes: &'a [Outcome],
    grid: &'a [f64],
    params: &'a ForestParams,
    mtry: usize,
    rng: &'a mut R,
    nodes: Vec<SurvTreeNode>,
}

/// Grows one survival tree on `sample` (row indices, repeats allowed).
///
/// At each node `mtry` features are drawn without replacement; every midpoint
/// between consecutive distinct values is tried and the split with the
/// largest log-rank statistic wins (lowest feature, then lowest threshold on
/// ties). A split is admissible only when both children keep at least
/// `min_node_size` members; nodes with fewer than `min_events_per_node`
/// events are not split.
pub fn grow_tree<R: Rng>(
    sample: &[usize],
    x: &DMatrix<f64>,
    outcomes: &[Outcome],
    grid: &[f64],
    params: &ForestParams,
    rng: &mut R,
) -> SurvTree {
    let mtry = params.mtry_for(x.ncols());
    let mut grower = Grower {
        x,
        outcomes,
        grid,
        params,
        mtry,
        rng,
        nodes: Vec::new(),
    };
    grower.grow(sample.to_vec());
    SurvTree { nodes: grower.nodes }
}

impl<R: Rng> Grower<'_, R> {
    fn grow(&mut self, members: Vec<usize>) -> usize {
        let at = self.nodes.len();
        self.nodes.push(SurvTreeNode::Leaf {
            jumps: Vec::new(),
            n_members: 0,
            n_events: 0,
            mortality: 0.0,
        });
        match self.best_split(&members) {
            None => self.nodes[at] = self.leaf(&members),
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = members
                    .iter()
                    .partition(|&&i| self.x[(i, feature)] <= threshold);
                let left = self.grow(l);
                let right = self.grow(r);
                self.nodes[at] = SurvTreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    missing_left: true,
                };
            }
        }
        at
    }

    fn leaf(&self, members: &[usize]) -> SurvTreeNode {
        let outs: Vec<Outcome> = members.iter().map(|&i| self.outcomes[i]).collect();
        let n_events = outs.iter().filter(|o| o.event).count();
        let jumps: Vec<(u32, f64)> = match nelson_aalen(&outs) {
            Ok(h) => h
                .knots()
                .iter()
                .zip(h.values())
                .map(|(&t, &v)| (self.grid.partition_point(|&g| g < t) as u32, v))
                .collect(),
            Err(_) => Vec::new(),
        };
        SurvTreeNode::Leaf {
            mortality: jumps_sum(&jumps, self.grid.len()),
            jumps,
            n_members: members.len(),
            n_events,
        }
    }

    fn best_split(&mut self, members: &[usize]) -> Option<(usize, f64)> {
        let min_leaf = self.params.min_node_size.max(1);
        let n = members.len();
        let n_events = members.iter().filter(|&&i| self.outcomes[i].event).count();
        if n < 2 * min_leaf || n_events < self.params.min_events_per_node.max(1) {
            return None;
        }

        let mut times: Vec<f64> = members
            .iter()
            .filter(|&&i| self.outcomes[i].event)
            .map(|&i| self.outcomes[i].time)
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let k = times.len();

        // reach[m]: member m is at risk at event times 0..reach[m]
        let reach: Vec<usize> = members
            .iter()
            .map(|&i| times.partition_point(|&t| t <= self.outcomes[i].time))
            .collect();
        let mut at_risk = vec![0.0; k];
        let mut events = vec![0.0; k];
        for (m, &i) in members.iter().enumerate() {
            for y in &mut at_risk[..reach[m]] {
                *y += 1.0;
            }
            if self.outcomes[i].event {
                events[reach[m] - 1] += 1.0;
            }
        }

        let p = self.x.ncols();
        let mut features = index::sample(self.rng, p, self.mtry.min(p)).into_vec();
        features.sort_unstable();

        let mut best: Option<(usize, f64, f64)> = None;
        let mut order: Vec<usize> = (0..n).collect();
        let mut left_at_risk = vec![0.0; k];
        let mut left_events = vec![0.0; k];
        for f in features {
            let value = |m: usize| self.x[(members[m], f)];
            order.sort_by(|&a, &b| value(a).total_cmp(&value(b)));
            left_at_risk.iter_mut().for_each(|v| *v = 0.0);
            left_events.iter_mut().for_each(|v| *v = 0.0);
            for pos in 0..n - 1 {
                let m = order[pos];
                for y in &mut left_at_risk[..reach[m]] {
                    *y += 1.0;
                }
                if self.outcomes[members[m]].event {
                    left_events[reach[m] - 1] += 1.0;
                }
                let (here, next) = (value(m), value(order[pos + 1]));
                let n_left = pos + 1;
                if here == next || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let Some(stat) = statistic_from_counts(&left_at_risk, &left_events, &at_risk, &events)
                else {
                    continue;
                };
                if best.is_none_or(|(_, _, s)| stat > s) {
                    best = Some((f, midpoint(here, next), stat));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }
}

/// A threshold strictly between `a < b` so that `a <= t < b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}
