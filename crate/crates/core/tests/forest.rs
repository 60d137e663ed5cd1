mod common;

use common::{rng, truth_matrix};
use rand::Rng;
use survpipe::features::FeatureMatrix;
use survpipe::forest::{
    fit_forest, logrank_split_statistic, oob_concordance, permutation_importance, Bootstrap, ForestParams,
    Permutation, SurvTreeNode,
};
use survpipe::survcore::Outcome;
use survpipe::synthgen::{generate, CovariateSpec, SynthSpec};

fn ev(t: f64) -> Outcome {
    Outcome::event(t)
}

fn matrix(cols: &[Vec<f64>]) -> FeatureMatrix {
    let n = cols[0].len();
    let names = (0..cols.len()).map(|j| format!("f{j}")).collect();
    let values = (0..n).flat_map(|i| cols.iter().map(move |c| c[i])).collect();
    FeatureMatrix::new((0..n).map(|i| format!("s{i}")).collect(), names, values).unwrap()
}

#[test]
fn logrank_early_versus_late() {
    let left = [ev(1.0), ev(2.0), ev(3.0)];
    let right = [ev(4.0), ev(5.0), ev(6.0)];
    // O - E = 37/20, variance 271/400
    let want = 1369.0 / 271.0;
    assert!((logrank_split_statistic(&left, &right).unwrap() - want).abs() < 1e-12);
}

#[test]
fn logrank_single_subject_side() {
    let left = [ev(2.0)];
    let right = [ev(1.0), Outcome::censored(3.0), ev(4.0)];
    // O - E = 5/12, variance 59/144
    let stat = logrank_split_statistic(&left, &right).unwrap();
    assert!((stat - 25.0 / 59.0).abs() < 1e-12);
    assert!(logrank_split_statistic(&[], &right).is_err());
}

fn separating_data() -> (FeatureMatrix, Vec<Outcome>) {
    let mut r = rng(4);
    let binary: Vec<f64> = (0..20).map(|i| f64::from(i % 2 == 0)).collect();
    let noise: Vec<f64> = (0..20).map(|_| r.gen_range(0.0..1.0)).collect();
    let outcomes = binary
        .iter()
        .enumerate()
        .map(|(i, &b)| ev(if b == 1.0 { 1.0 + i as f64 } else { 100.0 + i as f64 }))
        .collect();
    (matrix(&[noise, binary]), outcomes)
}

#[test]
fn separating_feature_wins_the_root() {
    let (m, o) = separating_data();
    let forest = fit_forest(&m, &o, &ForestParams::single_tree(3, 1)).unwrap();
    match forest.trees[0].nodes[0] {
        SurvTreeNode::Split { feature, threshold, .. } => {
            assert_eq!(feature, 1);
            assert_eq!(threshold, 0.5);
        }
        _ => panic!("root did not split"),
    }
    // exhaustive check: no split of the noise column does better
    let binary_stat = {
        let (l, r): (Vec<_>, Vec<_>) = (0..20).partition(|&i| m.raw(i, 1) < 0.5);
        logrank_split_statistic(&l.iter().map(|&i| o[i]).collect::<Vec<_>>(), &r.iter().map(|&i| o[i]).collect::<Vec<_>>()).unwrap()
    };
    let mut noise: Vec<f64> = m.column(0);
    noise.sort_by(f64::total_cmp);
    for w in noise.windows(2) {
        let cut = 0.5 * (w[0] + w[1]);
        let (l, r): (Vec<_>, Vec<_>) = (0..20).partition(|&i| m.raw(i, 0) <= cut);
        if l.len() < 3 || r.len() < 3 {
            continue;
        }
        let s = logrank_split_statistic(&l.iter().map(|&i| o[i]).collect::<Vec<_>>(), &r.iter().map(|&i| o[i]).collect::<Vec<_>>()).unwrap();
        assert!(s < binary_stat);
    }
}

#[test]
fn tree_invariants() {
    let (cohort, truth) = generate(&SynthSpec::linear(300, &[0.8, -0.5, 0.0], 0.01, 0.004, 3)).unwrap();
    let m = truth_matrix(&truth);
    let o = cohort.outcomes();
    let forest = fit_forest(&m, &o, &ForestParams { n_trees: 5, ..Default::default() }).unwrap();
    assert!(forest.grid.windows(2).all(|w| w[0] < w[1]));
    let x = forest.design(&m).unwrap();
    for tree in &forest.trees {
        for node in &tree.nodes {
            if let SurvTreeNode::Split { left, right, .. } = node {
                assert!(*left < tree.nodes.len() && *right < tree.nodes.len());
            }
        }
        for i in 0..m.n_rows() {
            let leaf = tree.leaf_index(|f| x[(i, f)]);
            assert!(matches!(tree.nodes[leaf], SurvTreeNode::Leaf { .. }));
        }
    }
    for i in 0..10 {
        let chf = forest.predict_chf(m.row(i)).unwrap();
        assert!(chf.values().windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn partition_is_invariant_under_monotone_transform() {
    let mut r = rng(21);
    let a: Vec<f64> = (0..80).map(|_| r.gen_range(-2.0..2.0)).collect();
    let b: Vec<f64> = (0..80).map(|_| r.gen_range(-2.0..2.0)).collect();
    let o: Vec<Outcome> = (0..80)
        .map(|i| Outcome::new((-r.gen::<f64>().ln() / (a[i] - 0.5 * b[i]).exp() * 100.0).ceil(), r.gen_bool(0.8)))
        .collect();
    let transformed: Vec<f64> = a.iter().map(|v| (2.0 * v).exp() + 7.0).collect();
    let params = ForestParams::single_tree(5, 2);
    let plain = matrix(&[a, b.clone()]);
    let warped = matrix(&[transformed, b]);
    let f1 = fit_forest(&plain, &o, &params).unwrap();
    let f2 = fit_forest(&warped, &o, &params).unwrap();
    let (x1, x2) = (f1.design(&plain).unwrap(), f2.design(&warped).unwrap());
    assert_eq!(f1.trees[0].nodes.len(), f2.trees[0].nodes.len());
    for i in 0..80 {
        assert_eq!(
            f1.trees[0].leaf_index(|f| x1[(i, f)]),
            f2.trees[0].leaf_index(|f| x2[(i, f)])
        );
    }
}

#[test]
fn out_of_bag_fraction_is_near_one_over_e() {
    let (cohort, truth) = generate(&SynthSpec::linear(200, &[0.5], 0.01, 0.004, 5)).unwrap();
    let params = ForestParams { n_trees: 500, min_node_size: 10, ..Default::default() };
    let forest = fit_forest(&truth_matrix(&truth), &cohort.outcomes(), &params).unwrap();
    let fractions = forest.oob_fractions();
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    assert!((0.30..=0.44).contains(&mean), "{mean}");
    assert!(forest.inbag.iter().all(|b| b.iter().sum::<u32>() == 200));
}

#[test]
fn strong_signal_gives_high_oob_concordance() {
    let (cohort, truth) = generate(&SynthSpec::linear(400, &[1.5], 0.01, 0.003, 6)).unwrap();
    let m = truth_matrix(&truth);
    let o = cohort.outcomes();
    let params = ForestParams { n_trees: 100, master_seed: 1, ..Default::default() };
    assert!(oob_concordance(&fit_forest(&m, &o, &params).unwrap(), &m, &o).unwrap() > 0.70);
}

#[test]
fn same_seed_same_forest() {
    let (cohort, truth) = generate(&SynthSpec::linear(150, &[0.5, 0.2], 0.01, 0.004, 8)).unwrap();
    let m = truth_matrix(&truth);
    let o = cohort.outcomes();
    let params = ForestParams { n_trees: 20, master_seed: 77, ..Default::default() };
    let a = fit_forest(&m, &o, &params).unwrap();
    let b = fit_forest(&m, &o, &params).unwrap();
    assert_eq!(a, b);
    let c = fit_forest(&m, &o, &ForestParams { master_seed: 78, ..params }).unwrap();
    assert_ne!(a.inbag, c.inbag);
}

#[test]
fn importance_finds_the_generating_covariate() {
    let spec = SynthSpec {
        covariates: vec![
            CovariateSpec::noise("x1"),
            CovariateSpec::informative("x2", 1.2),
            CovariateSpec::noise("x3"),
        ],
        ..SynthSpec::linear(300, &[], 0.01, 0.003, 9)
    };
    let (cohort, truth) = generate(&spec).unwrap();
    let m = truth_matrix(&truth);
    let o = cohort.outcomes();
    let params = ForestParams { n_trees: 100, master_seed: 2, ..Default::default() };
    let forest = fit_forest(&m, &o, &params).unwrap();
    let report = permutation_importance(&forest, &m, &o, 3, 4, Permutation::Shuffle).unwrap();
    assert_eq!(report.rank_of("x2"), Some(1));
    let mut ranks: Vec<usize> = report.entries.iter().map(|e| e.rank).collect();
    ranks.sort_unstable();
    assert_eq!(ranks, vec![1, 2, 3]);
    assert!(report.entries.windows(2).all(|w| w[0].importance >= w[1].importance));

    let identity = permutation_importance(&forest, &m, &o, 2, 4, Permutation::Identity).unwrap();
    assert!(identity.entries.iter().all(|e| e.importance == 0.0));
}

#[test]
fn bad_parameters_are_rejected() {
    let (m, o) = separating_data();
    assert!(fit_forest(&m, &o[..5], &ForestParams::default()).is_err());
    assert!(fit_forest(&m, &o, &ForestParams { n_trees: 0, ..Default::default() }).is_err());
    let p = ForestParams { bootstrap: Bootstrap::Identity, n_trees: 1, ..Default::default() };
    let f = fit_forest(&m, &o, &p).unwrap();
    assert!(permutation_importance(&f, &m, &o, 0, 1, Permutation::Shuffle).is_err());
}
