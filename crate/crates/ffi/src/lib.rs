//! C ABI over the survpipe library.
//!
//! Conventions:
//!
//! * Every fallible function returns an [`SpStatus`]; on failure a message is
//!   available from [`survpipe_last_error`] on the same thread.
//! * Models are opaque [`SpModel`] handles created by
//!   [`survpipe_model_load`] or [`survpipe_model_from_json`] and released with
//!   [`survpipe_model_free`].
//! * Feature rows are row-major `double` arrays in the model's feature order
//!   (see [`survpipe_model_feature_name`]); `NAN` marks a missing cell.
//! * Panics never cross the boundary; they surface as
//!   `SP_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use survpipe::features::{derive, window_filter, FeatureMatrix, Window};
use survpipe::pipeline::{predict_death, FittedModel, PipelineError};
use survpipe::survcore::{concordance_index, Outcome};

/// Bumped whenever a signature or struct layout in this header changes.
pub const SP_ABI_VERSION: u32 = 1;

/// Number of statistics written by `survpipe_derive_features`.
pub const SP_N_DERIVED: usize = 10;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    UnknownFeature = 5,
    InvalidArgument = 6,
    Model = 7,
    Internal = 8,
}

/// A trained model loaded from a `survpipe train` model file.
pub struct SpModel {
    model: FittedModel,
    names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: SpStatus, message: impl ToString) -> SpStatus {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
    status
}

fn guarded(body: impl FnOnce() -> SpStatus) -> SpStatus {
    catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|_| fail(SpStatus::Internal, "panic inside survpipe"))
}

fn pipeline_status(e: &PipelineError) -> SpStatus {
    match e.root() {
        PipelineError::UnknownFeature(_) => SpStatus::UnknownFeature,
        PipelineError::EmptyHorizons | PipelineError::BadHorizons => SpStatus::InvalidArgument,
        PipelineError::Serialization(_) | PipelineError::UnsupportedModel { .. } => SpStatus::Parse,
        _ => SpStatus::Model,
    }
}

/// ABI version of the loaded library; compare with `SP_ABI_VERSION`.
#[no_mangle]
pub extern "C" fn survpipe_abi_version() -> u32 {
    SP_ABI_VERSION
}

/// Message of the last failure on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn survpipe_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, SpStatus> {
    if p.is_null() {
        return Err(fail(SpStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SpStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], SpStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(SpStatus::NullArgument, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn install(model: FittedModel, out: *mut *mut SpModel) -> SpStatus {
    let names = match model
        .features
        .iter()
        .map(|f| CString::new(f.as_str()))
        .collect::<Result<Vec<_>, _>>()
    {
        Ok(n) => n,
        Err(_) => return fail(SpStatus::Parse, "feature name contains NUL"),
    };
    // SAFETY: `out` was checked for null by the caller.
    unsafe { *out = Box::into_raw(Box::new(SpModel { model, names })) };
    SpStatus::Ok
}

/// Parses a model from JSON text. On success `*out` owns a new handle.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn survpipe_model_from_json(json: *const c_char, out: *mut *mut SpModel) -> SpStatus {
    guarded(|| {
        if out.is_null() {
            return fail(SpStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let text = match str_arg(json, "json") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match FittedModel::from_json(text) {
            Ok(m) => install(m, out),
            Err(e) => fail(pipeline_status(&e), e),
        }
    })
}

/// Loads a model file written by `survpipe train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn survpipe_model_load(path: *const c_char, out: *mut *mut SpModel) -> SpStatus {
    guarded(|| {
        if out.is_null() {
            return fail(SpStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return fail(SpStatus::Io, format!("{path}: {e}")),
        };
        match FittedModel::from_json(&text) {
            Ok(m) => install(m, out),
            Err(e) => fail(pipeline_status(&e), format!("{path}: {e}")),
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn survpipe_model_free(model: *mut SpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of input features the model expects per row.
///
/// # Safety
/// `model` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn survpipe_model_n_features(model: *const SpModel) -> usize {
    model.as_ref().map_or(0, |m| m.names.len())
}

/// Name of feature `index`, or null when out of range. Owned by the handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn survpipe_model_feature_name(model: *const SpModel, index: usize) -> *const c_char {
    match model.as_ref().and_then(|m| m.names.get(index)) {
        Some(name) => name.as_ptr(),
        None => ptr::null(),
    }
}

fn rows_matrix(model: &SpModel, rows: &[f64], n_rows: usize, n_cols: usize) -> Result<FeatureMatrix, SpStatus> {
    if n_cols != model.names.len() {
        return Err(fail(
            SpStatus::InvalidArgument,
            format!("model expects {} columns, got {n_cols}", model.names.len()),
        ));
    }
    FeatureMatrix::new(
        (0..n_rows).map(|i| i.to_string()).collect(),
        model.model.features.clone(),
        rows.to_vec(),
    )
    .map_err(|e| fail(SpStatus::InvalidArgument, e))
}

/// Death probability for each row at each horizon, written to
/// `out[row * n_horizons + h]`. Horizons must be non-negative and strictly
/// ascending.
///
/// # Safety
/// `rows` must hold `n_rows * n_cols` doubles, `horizons` `n_horizons`
/// doubles and `out` room for `n_rows * n_horizons` doubles.
#[no_mangle]
pub unsafe extern "C" fn survpipe_model_predict_death(
    model: *const SpModel,
    rows: *const f64,
    n_rows: usize,
    n_cols: usize,
    horizons: *const f64,
    n_horizons: usize,
    out: *mut f64,
) -> SpStatus {
    guarded(|| {
        let Some(model) = model.as_ref() else {
            return fail(SpStatus::NullArgument, "model is null");
        };
        let (rows, horizons) = match (
            slice_arg(rows, n_rows * n_cols, "rows"),
            slice_arg(horizons, n_horizons, "horizons"),
        ) {
            (Ok(r), Ok(h)) => (r, h),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        if out.is_null() && n_rows * n_horizons > 0 {
            return fail(SpStatus::NullArgument, "out is null");
        }
        let matrix = match rows_matrix(model, rows, n_rows, n_cols) {
            Ok(m) => m,
            Err(s) => return s,
        };
        match predict_death(&model.model, &matrix, horizons) {
            Ok(set) => {
                for (r, probs) in set.probabilities.iter().enumerate() {
                    for (h, p) in probs.iter().enumerate() {
                        *out.add(r * n_horizons + h) = *p;
                    }
                }
                SpStatus::Ok
            }
            Err(e) => fail(pipeline_status(&e), e),
        }
    })
}

/// Risk score per row (linear predictor or ensemble mortality; higher means
/// earlier death expected).
///
/// # Safety
/// `rows` must hold `n_rows * n_cols` doubles and `out` room for `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn survpipe_model_risk_scores(
    model: *const SpModel,
    rows: *const f64,
    n_rows: usize,
    n_cols: usize,
    out: *mut f64,
) -> SpStatus {
    guarded(|| {
        let Some(model) = model.as_ref() else {
            return fail(SpStatus::NullArgument, "model is null");
        };
        let rows = match slice_arg(rows, n_rows * n_cols, "rows") {
            Ok(r) => r,
            Err(s) => return s,
        };
        if out.is_null() && n_rows > 0 {
            return fail(SpStatus::NullArgument, "out is null");
        }
        let matrix = match rows_matrix(model, rows, n_rows, n_cols) {
            Ok(m) => m,
            Err(s) => return s,
        };
        match model.model.risk_scores(&matrix) {
            Ok(scores) => {
                std::slice::from_raw_parts_mut(out, n_rows).copy_from_slice(&scores);
                SpStatus::Ok
            }
            Err(e) => fail(pipeline_status(&e), e),
        }
    })
}

/// Harrell's concordance index of `scores` against right-censored
/// outcomes. `events[i]` is nonzero when death was observed.
///
/// # Safety
/// `scores`, `times` and `events` must each hold `n` elements; `out` must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn survpipe_concordance_index(
    scores: *const f64,
    times: *const f64,
    events: *const u8,
    n: usize,
    out: *mut f64,
) -> SpStatus {
    guarded(|| {
        if out.is_null() {
            return fail(SpStatus::NullArgument, "out is null");
        }
        let (scores, times, events) = match (
            slice_arg(scores, n, "scores"),
            slice_arg(times, n, "times"),
            slice_arg(events, n, "events"),
        ) {
            (Ok(s), Ok(t), Ok(e)) => (s, t, e),
            (Err(s), _, _) | (_, Err(s), _) | (_, _, Err(s)) => return s,
        };
        let outcomes: Vec<Outcome> = times.iter().zip(events).map(|(&t, &e)| Outcome::new(t, e != 0)).collect();
        match concordance_index(scores, &outcomes) {
            Ok(c) => {
                *out = c;
                SpStatus::Ok
            }
            Err(e) => fail(SpStatus::InvalidArgument, e),
        }
    })
}

/// The ten window statistics of one series, in the order mean, sd, max, min,
/// diff, first, last, len, minmax, slope. Points outside `[low, high]` are
/// ignored; an empty window is an error.
///
/// # Safety
/// `days` and `values` must hold `n` elements; `out` room for
/// `SP_N_DERIVED` doubles.
#[no_mangle]
pub unsafe extern "C" fn survpipe_derive_features(
    days: *const i64,
    values: *const f64,
    n: usize,
    low: i64,
    high: i64,
    out: *mut f64,
) -> SpStatus {
    guarded(|| {
        if out.is_null() {
            return fail(SpStatus::NullArgument, "out is null");
        }
        let (days, values) = match (slice_arg(days, n, "days"), slice_arg(values, n, "values")) {
            (Ok(d), Ok(v)) => (d, v),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        if values.iter().any(|v| !v.is_finite()) {
            return fail(SpStatus::InvalidArgument, "values must be finite");
        }
        let window = match Window::new(low, high) {
            Ok(w) => w,
            Err(e) => return fail(SpStatus::InvalidArgument, e),
        };
        let series: Vec<(i64, f64)> = days.iter().copied().zip(values.iter().copied()).collect();
        match derive(&window_filter(&series, window)) {
            Ok(d) => {
                std::slice::from_raw_parts_mut(out, SP_N_DERIVED).copy_from_slice(&d.to_array());
                SpStatus::Ok
            }
            Err(e) => fail(SpStatus::InvalidArgument, e),
        }
    })
}
