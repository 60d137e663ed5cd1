mod common;

use common::truth_matrix;
use nalgebra::DMatrix;
use proptest::prelude::*;
use survpipe::features::FeatureMatrix;
use survpipe::linmodels::LambdaGrid;
use survpipe::selection::{
    consensus, rank_by_boosting, rank_by_elastic_net_grid, rank_by_forest_vimp, read_selected, BudgetMode,
    SelectorMethod, SelectorRanking,
};
use survpipe::forest::ForestParams;
use survpipe::survcore::Outcome;
use survpipe::synthgen::{generate, CovariateSpec, SynthSpec};

fn ranking(method: SelectorMethod, features: &[String], order: &[usize]) -> SelectorRanking {
    let mut ranks = vec![0; features.len()];
    for (pos, &j) in order.iter().enumerate() {
        ranks[j] = pos + 1;
    }
    let scores = ranks.iter().map(|&r| -(r as f64)).collect();
    SelectorRanking { method, features: features.to_vec(), scores, ranks }
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("v{j}")).collect()
}

fn permutation(seed: u64, p: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut v: Vec<usize> = (0..p).collect();
    v.shuffle(&mut common::rng(seed));
    v
}

proptest! {
    #[test]
    fn consensus_is_order_free(p in 1usize..15, budget in 1usize..20, seeds in any::<[u64; 3]>()) {
        let f = names(p);
        let r = [
            ranking(SelectorMethod::ForestVimp, &f, &permutation(seeds[0], p)),
            ranking(SelectorMethod::BoostedCox, &f, &permutation(seeds[1], p)),
            ranking(SelectorMethod::ElasticNet, &f, &permutation(seeds[2], p)),
        ];
        let base = consensus(&r, budget, BudgetMode::Columns).unwrap();
        prop_assert_eq!(base.selected.len(), budget.min(p));
        let means: Vec<f64> = base.selected.iter().map(|s| base.mean_ranks[f.iter().position(|x| x == s).unwrap()]).collect();
        prop_assert!(means.windows(2).all(|w| w[0] <= w[1]));
        for perm in [[1, 0, 2], [2, 1, 0], [1, 2, 0], [2, 0, 1], [0, 2, 1]] {
            let shuffled: Vec<SelectorRanking> = perm.iter().map(|&i| r[i].clone()).collect();
            let other = consensus(&shuffled, budget, BudgetMode::Columns).unwrap();
            prop_assert_eq!(&other.selected, &base.selected);
            prop_assert_eq!(&other.mean_ranks, &base.mean_ranks);
        }
    }
}

#[test]
fn consensus_hand_example() {
    let f = names(4);
    let r = [
        ranking(SelectorMethod::ForestVimp, &f, &[0, 1, 2, 3]),
        ranking(SelectorMethod::BoostedCox, &f, &[1, 0, 3, 2]),
        ranking(SelectorMethod::ElasticNet, &f, &[2, 1, 0, 3]),
    ];
    let c = consensus(&r, 2, BudgetMode::Columns).unwrap();
    // mean ranks: v0 = 2, v1 = 5/3, v2 = 7/3, v3 = 10/3
    assert_eq!(c.selected, vec!["v1".to_string(), "v0".to_string()]);
    assert!(consensus(&r, 0, BudgetMode::Columns).is_err());
    let mut mismatched = r.clone();
    mismatched[2].features[0] = "other".into();
    assert!(consensus(&mismatched, 2, BudgetMode::Columns).is_err());
}

#[test]
fn source_variable_budget_counts_groups() {
    let f: Vec<String> = ["alsfrs_mean", "alsfrs_slope", "fvc_mean", "Age"].iter().map(|s| s.to_string()).collect();
    let order = [0, 1, 2, 3];
    let r = [
        ranking(SelectorMethod::ForestVimp, &f, &order),
        ranking(SelectorMethod::BoostedCox, &f, &order),
        ranking(SelectorMethod::ElasticNet, &f, &order),
    ];
    let c = consensus(&r, 2, BudgetMode::SourceVariables).unwrap();
    assert_eq!(c.selected, vec!["alsfrs_mean", "alsfrs_slope", "fvc_mean"]);
}

#[test]
fn csv_outputs_round_trip_the_selection() {
    let f = names(3);
    let order = [2, 0, 1];
    let r = [
        ranking(SelectorMethod::ForestVimp, &f, &order),
        ranking(SelectorMethod::BoostedCox, &f, &order),
        ranking(SelectorMethod::ElasticNet, &f, &order),
    ];
    let c = consensus(&r, 2, BudgetMode::Columns).unwrap();
    let mut out = Vec::new();
    c.write_consensus_csv(&mut out).unwrap();
    let text = String::from_utf8(out.clone()).unwrap();
    assert!(text.starts_with("feature,mean_rank,selected\nv2,1,1\n"));
    assert_eq!(read_selected(out.as_slice()).unwrap(), vec!["v2", "v0"]);
    let mut out = Vec::new();
    c.write_rankings_csv(&mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap().lines().count(), 1 + 9);
}

fn one_signal_cohort() -> (FeatureMatrix, Vec<Outcome>) {
    let spec = SynthSpec {
        covariates: vec![
            CovariateSpec::noise("x1"),
            CovariateSpec::noise("x2"),
            CovariateSpec::informative("x3", 1.0),
            CovariateSpec::noise("x4"),
        ],
        ..SynthSpec::linear(300, &[], 0.01, 0.003, 31)
    };
    let (cohort, truth) = generate(&spec).unwrap();
    (truth_matrix(&truth), cohort.outcomes())
}

#[test]
fn every_selector_ranks_the_signal_first() {
    let (m, o) = one_signal_cohort();
    let params = ForestParams { n_trees: 100, master_seed: 3, ..Default::default() };
    let vimp = rank_by_forest_vimp(&m, &o, &params, 3).unwrap();
    let boost = rank_by_boosting(&m, &o, 0.1, 100).unwrap();
    let grid = LambdaGrid::Auto { n_lambda: 40, min_ratio: 1e-2 };
    let enet = rank_by_elastic_net_grid(&m, &o, 0.5, &grid).unwrap();
    for r in [&vimp, &boost, &enet] {
        assert_eq!(r.rank_of("x3"), Some(1), "{:?}", r.method);
        let mut ranks = r.ranks.clone();
        ranks.sort_unstable();
        assert_eq!(ranks, vec![1, 2, 3, 4]);
    }
}

#[test]
fn boosting_ranks_the_fixed_instance() {
    let x1 = [2.1, 1.4, 0.3, 2.5, -0.8, -0.2, 1.9, -1.5, 0.9, -1.1];
    let x2 = [0.4, -1.2, 0.9, 0.1, -0.3, 1.5, -0.7, 0.2, -1.0, 0.6];
    let times = [5.0, 8.0, 12.0, 3.0, 20.0, 15.0, 7.0, 30.0, 10.0, 25.0];
    let events = [1, 1, 0, 1, 1, 1, 1, 0, 1, 1];
    let x = DMatrix::from_fn(10, 2, |i, j| if j == 0 { x2[i] } else { x1[i] });
    let m = FeatureMatrix::new(
        (0..10).map(|i| format!("s{i}")).collect(),
        vec!["noise".into(), "signal".into()],
        x.transpose().iter().copied().collect(),
    )
    .unwrap();
    let o: Vec<Outcome> = times.iter().zip(events).map(|(&t, e)| Outcome::new(t, e == 1)).collect();
    let r = rank_by_boosting(&m, &o, 1.0, 1).unwrap();
    assert_eq!(r.rank_of("signal"), Some(1));
    assert_eq!(r.rank_of("noise"), Some(2));
}
