use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn survpipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_survpipe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = survpipe(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A synthesized cohort and its engineered matrix.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new(n: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let eng = dir.path().join("eng");
        ok(&["synth", "--n", &n.to_string(), "--seed", "5", "--out", s(&data)]);
        ok(&[
            "engineer",
            "--statics", s(&data.join("statics.csv")),
            "--longitudinal", s(&data.join("longitudinal.csv")),
            "--outcomes", s(&data.join("outcomes.csv")),
            "--out", s(&eng),
        ]);
        Fixture { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn missing_input_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = survpipe(&["compare", "--matrix", s(&missing), "--outcomes", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("nope.csv"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(survpipe(&["compare", "--k", "many"]).status.code(), Some(1));
    assert_eq!(survpipe(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(survpipe(&["--help"]).status.code(), Some(0));
}

#[test]
fn engineer_writes_matrix_and_report() {
    let f = Fixture::new(60);
    let full = fs::read_to_string(f.path("eng/matrix_full.csv")).unwrap();
    let kept = fs::read_to_string(f.path("eng/matrix.csv")).unwrap();
    assert_eq!(full.lines().count(), 61);
    assert_eq!(kept.lines().count(), 61);
    assert!(full.lines().next().unwrap().split(',').count() >= kept.lines().next().unwrap().split(',').count());
    let report = fs::read_to_string(f.path("eng/pruning_report.csv")).unwrap();
    assert!(report.starts_with("column,reason,culprit,value\n"));
    assert!(f.path("eng/run_config.resolved").exists());
}

#[test]
fn compare_rejects_too_many_folds() {
    let f = Fixture::new(40);
    let out = survpipe(&[
        "compare",
        "--matrix", s(&f.path("eng/matrix.csv")),
        "--outcomes", s(&f.path("data/outcomes.csv")),
        "--k", "41",
        "--out", s(&f.path("cmp")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("k"));
}

#[test]
fn config_file_is_validated_and_overridden_by_flags() {
    let f = Fixture::new(150);
    let cfg = f.path("run.toml");
    fs::write(&cfg, "k = 3\nmodels = [\"cox\"]\nunknown_key = 1\n").unwrap();
    let args = |c: &Path| {
        vec![
            "compare".to_string(),
            "--config".into(), s(c).into(),
            "--matrix".into(), s(&f.path("eng/matrix.csv")).into(),
            "--outcomes".into(), s(&f.path("data/outcomes.csv")).into(),
            "--out".into(), s(&f.path("cmp")).into(),
            "--k".into(), "4".into(),
        ]
    };
    let a = args(&cfg);
    let out = survpipe(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(1));

    fs::write(&cfg, "k = 3\nmodels = [\"cox\"]\n").unwrap();
    ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
    let resolved = fs::read_to_string(f.path("cmp/run_config.resolved")).unwrap();
    assert!(resolved.contains("k = 4"), "{resolved}");
    let report = fs::read_to_string(f.path("cmp/cv_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 4 + 1);
}

#[test]
fn resolved_config_can_be_replayed() {
    let f = Fixture::new(40);
    let first = f.path("eng/run_config.resolved");
    let replay = f.path("replay");
    ok(&["engineer", "--config", s(&first), "--out", s(&replay)]);
    assert_eq!(
        fs::read(f.path("eng/matrix.csv")).unwrap(),
        fs::read(replay.join("matrix.csv")).unwrap()
    );
}

#[test]
fn predict_checks_features_and_horizons() {
    let f = Fixture::new(80);
    let matrix = f.path("eng/matrix.csv");
    let outcomes = f.path("data/outcomes.csv");
    ok(&["train", "--matrix", s(&matrix), "--outcomes", s(&outcomes), "--model", "cox", "--out", s(&f.path("train"))]);
    let model = f.path("train/model.json");

    ok(&["predict", "--model-file", s(&model), "--matrix", s(&matrix), "--horizons", "0,30", "--out", s(&f.path("pred"))]);
    let preds = fs::read_to_string(f.path("pred/predictions.csv")).unwrap();
    let mut lines = preds.lines();
    assert_eq!(lines.next(), Some("subject_id,horizon_days,death_probability"));
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        if cols[1] == "0" {
            assert_eq!(cols[2].parse::<f64>().unwrap(), 0.0);
        }
    }

    let bad = survpipe(&["predict", "--model-file", s(&model), "--matrix", s(&matrix), "--horizons", "30,10", "--out", s(&f.path("pred"))]);
    assert_eq!(bad.status.code(), Some(1));

    // drop the first feature column from the matrix
    let text = fs::read_to_string(&matrix).unwrap();
    let narrow: String = text
        .lines()
        .map(|l| {
            let mut c: Vec<&str> = l.split(',').collect();
            c.remove(1);
            c.join(",") + "\n"
        })
        .collect();
    let narrow_path = f.path("narrow.csv");
    fs::write(&narrow_path, narrow).unwrap();
    let out = survpipe(&["predict", "--model-file", s(&model), "--matrix", s(&narrow_path), "--out", s(&f.path("pred"))]);
    assert_eq!(out.status.code(), Some(1));
    let header = text.lines().next().unwrap();
    let dropped = header.split(',').nth(1).unwrap();
    assert!(stderr(&out).contains(dropped), "{}", stderr(&out));
}

#[test]
fn malformed_model_file_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    fs::write(&model, "{not json").unwrap();
    let matrix = dir.path().join("m.csv");
    fs::write(&matrix, "subject_id,a\ns1,1\n").unwrap();
    let out = survpipe(&["predict", "--model-file", s(&model), "--matrix", s(&matrix), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("model.json"));
}
