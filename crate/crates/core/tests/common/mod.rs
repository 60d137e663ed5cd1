//! Reference implementations shared by the integration tests. Written for
//! clarity, not speed; they share no code with the library.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use survpipe::features::FeatureMatrix;
use survpipe::survcore::Outcome;
use survpipe::synthgen::GroundTruth;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// (concordant weight × 2, permissible pairs) by enumerating all pairs.
pub fn brute_concordance(scores: &[f64], outcomes: &[Outcome]) -> (u64, u64) {
    let mut c2 = 0;
    let mut m = 0;
    for i in 0..outcomes.len() {
        for j in 0..outcomes.len() {
            if outcomes[i].event && outcomes[i].time < outcomes[j].time {
                m += 1;
                if scores[i] > scores[j] {
                    c2 += 2;
                } else if scores[i] == scores[j] {
                    c2 += 1;
                }
            }
        }
    }
    (c2, m)
}

pub fn brute_cindex(scores: &[f64], outcomes: &[Outcome]) -> f64 {
    let (c2, m) = brute_concordance(scores, outcomes);
    c2 as f64 / (2 * m) as f64
}

/// Efron negative log partial likelihood, straight from the definition.
pub fn efron_nll(beta: &[f64], x: &DMatrix<f64>, outcomes: &[Outcome]) -> f64 {
    let n = outcomes.len();
    let eta: Vec<f64> = (0..n)
        .map(|i| (0..beta.len()).map(|j| x[(i, j)] * beta[j]).sum())
        .collect();
    let mut times: Vec<f64> = outcomes.iter().filter(|o| o.event).map(|o| o.time).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut ll = 0.0;
    for t in times {
        let deaths: Vec<usize> = (0..n).filter(|&i| outcomes[i].event && outcomes[i].time == t).collect();
        let risk: f64 = (0..n).filter(|&i| outcomes[i].time >= t).map(|i| eta[i].exp()).sum();
        let tied: f64 = deaths.iter().map(|&i| eta[i].exp()).sum();
        let d = deaths.len() as f64;
        for (l, &i) in deaths.iter().enumerate() {
            ll += eta[i];
            ll -= (risk - l as f64 / d * tied).ln();
        }
    }
    -ll
}

/// Golden-section minimum of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Survival outcomes with ties on a coarse time grid and random censoring.
pub fn tied_outcomes(r: &mut impl Rng, n: usize, levels: u32) -> Vec<Outcome> {
    let mut out: Vec<Outcome> = (0..n)
        .map(|_| Outcome::new(r.gen_range(1..=levels) as f64, r.gen_bool(0.7)))
        .collect();
    if !out.iter().any(|o| o.event) {
        out[0].event = true;
    }
    out
}

/// Static covariates of a generated cohort as a matrix named x1, x2, ...
pub fn truth_matrix(truth: &GroundTruth) -> FeatureMatrix {
    let n = truth.covariates.len();
    let p = truth.covariates.first().map_or(0, Vec::len);
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    let values = truth.covariates.iter().flatten().copied().collect();
    let m = FeatureMatrix::new(truth.subject_ids.clone(), names, values).unwrap();
    assert_eq!(m.n_rows(), n);
    m
}

pub fn to_dmatrix(m: &FeatureMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.n_rows(), m.n_cols(), |r, c| m.raw(r, c))
}

pub fn names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}
