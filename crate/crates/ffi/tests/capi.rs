use std::ffi::{CStr, CString};
use std::ptr;

use survpipe::features::FeatureMatrix;
use survpipe::pipeline::{predict_death, train_final, ModelSpec};
use survpipe::survcore::{concordance_index, Outcome};
use survpipe_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(survpipe_last_error()) }.to_string_lossy().into_owned()
}

fn toy() -> (FeatureMatrix, Vec<Outcome>) {
    let n = 60;
    let mut values = Vec::new();
    let mut outcomes = Vec::new();
    for i in 0..n {
        let x = ((i * 7) % 11) as f64 / 3.0;
        let z = ((i * 5) % 13) as f64;
        values.extend([x, z]);
        let noise = ((i * 37) % 17) as f64 * 9.0;
        outcomes.push(Outcome::new(50.0 + 40.0 * (3.5 - x) + 3.0 * z + noise + i as f64 * 0.01, i % 4 != 0));
    }
    let m = FeatureMatrix::new(
        (0..n).map(|i| format!("s{i}")).collect(),
        vec!["x".into(), "z".into()],
        values,
    )
    .unwrap();
    (m, outcomes)
}

fn load(json: &str) -> *mut SpModel {
    let text = CString::new(json).unwrap();
    let mut handle = ptr::null_mut();
    let status = unsafe { survpipe_model_from_json(text.as_ptr(), &mut handle) };
    assert_eq!(status, SpStatus::Ok, "{}", last_error());
    handle
}

#[test]
fn abi_version_matches_header_constant() {
    assert_eq!(survpipe_abi_version(), SP_ABI_VERSION);
}

#[test]
fn concordance_matches_library() {
    let scores = [0.3, 0.1, 0.9, 0.5, 0.5];
    let times = [4.0, 6.0, 1.0, 3.0, 2.0];
    let events = [1u8, 0, 1, 1, 0];
    let mut c = f64::NAN;
    let status = unsafe { survpipe_concordance_index(scores.as_ptr(), times.as_ptr(), events.as_ptr(), 5, &mut c) };
    assert_eq!(status, SpStatus::Ok);
    let outcomes: Vec<Outcome> = times.iter().zip(events).map(|(&t, e)| Outcome::new(t, e == 1)).collect();
    assert_eq!(c, concordance_index(&scores, &outcomes).unwrap());
}

#[test]
fn concordance_without_pairs_reports_error() {
    let mut c = 0.0;
    let status = unsafe {
        survpipe_concordance_index([1.0, 2.0].as_ptr(), [1.0, 2.0].as_ptr(), [0u8, 0].as_ptr(), 2, &mut c)
    };
    assert_eq!(status, SpStatus::InvalidArgument);
    assert!(!last_error().is_empty());
}

#[test]
fn derive_features_through_the_abi() {
    let days = [0i64, 30, 60, 200];
    let values = [30.0, 28.0, 25.0, 10.0];
    let mut out = [0.0; SP_N_DERIVED];
    let status = unsafe { survpipe_derive_features(days.as_ptr(), values.as_ptr(), 4, 0, 92, out.as_mut_ptr()) };
    assert_eq!(status, SpStatus::Ok);
    assert_eq!(out[0], 83.0 / 3.0);
    assert_eq!(out[2], 30.0);
    assert_eq!(out[3], 25.0);
    assert_eq!(out[7], 3.0);
    assert!((out[9] - (-5.0 / 60.0)).abs() < 1e-15);

    let status = unsafe { survpipe_derive_features(days.as_ptr(), values.as_ptr(), 4, 300, 400, out.as_mut_ptr()) };
    assert_eq!(status, SpStatus::InvalidArgument);
}

#[test]
fn model_round_trip_predicts_like_the_library() {
    let (m, out) = toy();
    for spec in [ModelSpec::cox(), ModelSpec::forest()] {
        let model = train_final(&spec, &m, &out, 5).unwrap();
        let handle = load(&model.to_json().unwrap());
        unsafe {
            assert_eq!(survpipe_model_n_features(handle), 2);
            let name = CStr::from_ptr(survpipe_model_feature_name(handle, 1));
            assert_eq!(name.to_str().unwrap(), "z");
            assert!(survpipe_model_feature_name(handle, 2).is_null());
        }

        let horizons = [0.0, 100.0, 200.0];
        let mut probs = vec![0.0; m.n_rows() * 3];
        let status = unsafe {
            survpipe_model_predict_death(handle, m.row(0).as_ptr(), m.n_rows(), 2, horizons.as_ptr(), 3, probs.as_mut_ptr())
        };
        assert_eq!(status, SpStatus::Ok, "{}", last_error());
        let expected = predict_death(&model, &m, &horizons).unwrap();
        let flat: Vec<f64> = expected.probabilities.concat();
        assert_eq!(probs, flat);

        let mut risk = vec![0.0; m.n_rows()];
        let status =
            unsafe { survpipe_model_risk_scores(handle, m.row(0).as_ptr(), m.n_rows(), 2, risk.as_mut_ptr()) };
        assert_eq!(status, SpStatus::Ok);
        assert_eq!(risk, model.risk_scores(&m).unwrap());

        unsafe { survpipe_model_free(handle) };
    }
}

#[test]
fn argument_errors() {
    let (m, out) = toy();
    let model = train_final(&ModelSpec::cox(), &m, &out, 0).unwrap();
    let handle = load(&model.to_json().unwrap());
    let mut probs = [0.0; 3];
    unsafe {
        let status = survpipe_model_predict_death(handle, m.row(0).as_ptr(), 1, 3, [1.0].as_ptr(), 1, probs.as_mut_ptr());
        assert_eq!(status, SpStatus::InvalidArgument);
        let status = survpipe_model_predict_death(handle, m.row(0).as_ptr(), 1, 2, [2.0, 1.0].as_ptr(), 2, probs.as_mut_ptr());
        assert_eq!(status, SpStatus::InvalidArgument);
        let status = survpipe_model_predict_death(ptr::null(), m.row(0).as_ptr(), 1, 2, [1.0].as_ptr(), 1, probs.as_mut_ptr());
        assert_eq!(status, SpStatus::NullArgument);
        survpipe_model_free(handle);
        survpipe_model_free(ptr::null_mut());
    }
}

#[test]
fn load_errors() {
    let mut handle = ptr::null_mut();
    let bad = CString::new("{\"format\": \"other\", \"version\": 1, \"model\": {}}").unwrap();
    assert_eq!(unsafe { survpipe_model_from_json(bad.as_ptr(), &mut handle) }, SpStatus::Parse);
    assert!(handle.is_null());
    let garbage = CString::new("not json").unwrap();
    assert_eq!(unsafe { survpipe_model_from_json(garbage.as_ptr(), &mut handle) }, SpStatus::Parse);

    let missing = CString::new("/nonexistent/survpipe/model.json").unwrap();
    assert_eq!(unsafe { survpipe_model_load(missing.as_ptr(), &mut handle) }, SpStatus::Io);
    assert!(last_error().contains("/nonexistent/survpipe/model.json"));
    assert_eq!(unsafe { survpipe_model_load(ptr::null(), &mut handle) }, SpStatus::NullArgument);
}

#[test]
fn load_from_file() {
    let (m, out) = toy();
    let model = train_final(&ModelSpec::tree(), &m, &out, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    std::fs::write(&path, model.to_json().unwrap()).unwrap();
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { survpipe_model_load(c_path.as_ptr(), &mut handle) }, SpStatus::Ok);
    unsafe { survpipe_model_free(handle) };
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/survpipe.h");
    let text = std::fs::read_to_string(header).unwrap();
    for symbol in [
        "survpipe_abi_version",
        "survpipe_last_error",
        "survpipe_model_load",
        "survpipe_model_free",
        "survpipe_model_predict_death",
        "survpipe_concordance_index",
        "survpipe_derive_features",
        "typedef struct SpModel SpModel",
    ] {
        assert!(text.contains(symbol), "{symbol} missing from header");
    }
    // a C compiler is optional in the build environment
    if let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-std=c99", "-Wall", "-Werror", "-x", "c", header])
        .status()
    {
        assert!(status.success(), "header does not compile as C99");
    }
}
