//! C ABI for fairaudit.
//!
//! Every fallible function returns an [`FaStatus`]. On failure a description
//! is available from [`fa_last_error_message`] on the same thread until the
//! next failing call. Models are opaque [`FaModel`] handles loaded from the
//! `model_<path>.json` files written by `fairaudit audit`; their inputs are
//! encoded but unstandardized feature rows, in the order of the file's
//! `feature_names`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::size_t;

use fairaudit::audit::{AuditError, ModelArtifact};
use fairaudit::fairness::{self, ConsistencyOptions, DisparateImpact};
use fairaudit::model::Predictor;
use fairaudit::reweigh;
use fairaudit::shap::{self, ExplainerConfig, MethodChoice};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    DimensionMismatch = 5,
    Explain = 6,
    Fairness = 7,
    Reweigh = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaMethod {
    Auto = 0,
    Exact = 1,
    Sampled = 2,
}

/// Opaque model handle.
pub struct FaModel {
    artifact: ModelArtifact,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

type Fallible = Result<(), (FaStatus, String)>;

fn fail<T>(status: FaStatus, msg: impl Into<String>) -> Result<T, (FaStatus, String)> {
    Err((status, msg.into()))
}

fn guard(f: impl FnOnce() -> Fallible) -> FaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FaStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FaStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (FaStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(FaStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(
    p: *mut T,
    len: usize,
    what: &str,
) -> Result<&'a mut [T], (FaStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return fail(FaStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (FaStatus, String)> {
    p.as_mut()
        .ok_or_else(|| (FaStatus::NullPointer, format!("{what} is null")))
}

unsafe fn model_ref<'a>(model: *const FaModel) -> Result<&'a FaModel, (FaStatus, String)> {
    model
        .as_ref()
        .ok_or_else(|| (FaStatus::NullPointer, "model is null".to_owned()))
}

fn binary(values: &[u8], what: &str) -> Fallible {
    if values.iter().any(|&v| v > 1) {
        return fail(FaStatus::InvalidArgument, format!("{what} must be 0 or 1"));
    }
    Ok(())
}

/// Row-major `n_rows x n_cols` matrix into owned rows.
unsafe fn rows(
    p: *const f64,
    n_rows: usize,
    n_cols: usize,
    what: &str,
) -> Result<Vec<Vec<f64>>, (FaStatus, String)> {
    let len = n_rows
        .checked_mul(n_cols)
        .ok_or_else(|| (FaStatus::InvalidArgument, format!("{what} is too large")))?;
    Ok(slice(p, len, what)?
        .chunks(n_cols.max(1))
        .map(<[f64]>::to_vec)
        .take(n_rows)
        .collect())
}

fn fairness_err(e: fairness::FairnessError) -> (FaStatus, String) {
    (FaStatus::Fairness, e.to_string())
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model file. On success `*out` owns a handle to release with
/// [`fa_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fa_model_load(path: *const c_char, out: *mut *mut FaModel) -> FaStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        if path.is_null() {
            return fail(FaStatus::NullPointer, "path is null");
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (FaStatus::InvalidArgument, "path is not UTF-8".to_owned()))?;
        let text =
            std::fs::read_to_string(path).map_err(|e| (FaStatus::Io, format!("{path}: {e}")))?;
        let artifact =
            ModelArtifact::from_json(&text).map_err(|e| (FaStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(FaModel { artifact }));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle from [`fa_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fa_model_free(model: *mut FaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fa_model_feature_count(
    model: *const FaModel,
    out: *mut size_t,
) -> FaStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out_ref(out, "out")? = m.artifact.feature_names.len();
        Ok(())
    })
}

/// Favorable-class probabilities for `n_rows` row-major rows of
/// `n_cols` features, written to `out[0..n_rows]`.
///
/// # Safety
/// `x` must hold `n_rows * n_cols` doubles and `out` `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn fa_model_predict_proba(
    model: *const FaModel,
    x: *const f64,
    n_rows: size_t,
    n_cols: size_t,
    out: *mut f64,
) -> FaStatus {
    guard(|| {
        let m = &model_ref(model)?.artifact;
        if n_cols != m.feature_names.len() {
            return fail(
                FaStatus::DimensionMismatch,
                format!(
                    "model expects {} features, got {n_cols}",
                    m.feature_names.len()
                ),
            );
        }
        let x = rows(x, n_rows, n_cols, "rows")?;
        let out = slice_mut(out, n_rows, "out")?;
        for (o, row) in out.iter_mut().zip(&x) {
            *o = m.model.predict_row(&m.standardization.transform_row(row));
        }
        Ok(())
    })
}

/// Shapley values of one instance against a background sample. Writes
/// `n_cols` attributions to `phi` and the base value to `phi0`.
///
/// # Safety
/// `x` must hold `n_cols` doubles, `background` `n_background * n_cols`,
/// `phi` `n_cols`, and `phi0` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fa_model_explain(
    model: *const FaModel,
    x: *const f64,
    n_cols: size_t,
    background: *const f64,
    n_background: size_t,
    method: FaMethod,
    permutations: size_t,
    exact_threshold: size_t,
    seed: u64,
    phi: *mut f64,
    phi0: *mut f64,
) -> FaStatus {
    guard(|| {
        let m = &model_ref(model)?.artifact;
        if n_cols != m.feature_names.len() {
            return fail(
                FaStatus::DimensionMismatch,
                format!(
                    "model expects {} features, got {n_cols}",
                    m.feature_names.len()
                ),
            );
        }
        let std = &m.standardization;
        let x = std.transform_row(slice(x, n_cols, "x")?);
        let background = rows(background, n_background, n_cols, "background")?
            .iter()
            .map(|r| std.transform_row(r))
            .collect();
        let config = ExplainerConfig {
            background,
            exact_threshold,
            permutations,
            seed,
        };
        let choice = match method {
            FaMethod::Auto => MethodChoice::Auto,
            FaMethod::Exact => MethodChoice::Exact,
            FaMethod::Sampled => MethodChoice::Sampled,
        };
        let phi = slice_mut(phi, n_cols, "phi")?;
        let phi0 = out_ref(phi0, "phi0")?;
        let e = shap::explain(&m.model, &x, &config, choice)
            .map_err(|e| (FaStatus::Explain, AuditError::from(e).to_string()))?;
        phi.copy_from_slice(&e.phi);
        *phi0 = e.phi0;
        Ok(())
    })
}

/// Disparate impact of 0/1 predictions. An infinite ratio is reported as
/// `+INFINITY` and 0/0 as NaN.
///
/// # Safety
/// `predictions` and `sensitive` must hold `n` bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fa_disparate_impact(
    predictions: *const u8,
    sensitive: *const u8,
    n: size_t,
    out: *mut f64,
) -> FaStatus {
    guard(|| {
        let p = slice(predictions, n, "predictions")?;
        let s = slice(sensitive, n, "sensitive")?;
        binary(p, "predictions")?;
        binary(s, "sensitive")?;
        *out_ref(out, "out")? = match fairness::disparate_impact(p, s).map_err(fairness_err)? {
            DisparateImpact::Defined(v) => v,
            DisparateImpact::Infinite => f64::INFINITY,
            DisparateImpact::Indeterminate => f64::NAN,
        };
        Ok(())
    })
}

/// True-positive rate of the unprivileged group minus the privileged group.
///
/// # Safety
/// The three arrays must hold `n` bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fa_equal_opportunity(
    predictions: *const u8,
    labels: *const u8,
    sensitive: *const u8,
    n: size_t,
    out: *mut f64,
) -> FaStatus {
    guard(|| {
        let p = slice(predictions, n, "predictions")?;
        let y = slice(labels, n, "labels")?;
        let s = slice(sensitive, n, "sensitive")?;
        for (v, what) in [(p, "predictions"), (y, "labels"), (s, "sensitive")] {
            binary(v, what)?;
        }
        *out_ref(out, "out")? = fairness::equal_opportunity(p, y, s).map_err(fairness_err)?;
        Ok(())
    })
}

/// kNN consistency of 0/1 predictions over row-major features, with column
/// `sensitive_index` removed before the neighbor search.
///
/// # Safety
/// `predictions` must hold `n_rows` bytes, `features` `n_rows * n_cols`
/// doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fa_consistency(
    predictions: *const u8,
    features: *const f64,
    n_rows: size_t,
    n_cols: size_t,
    sensitive_index: size_t,
    k: size_t,
    self_inclusion: bool,
    out: *mut f64,
) -> FaStatus {
    guard(|| {
        let p = slice(predictions, n_rows, "predictions")?;
        if sensitive_index >= n_cols {
            return fail(FaStatus::InvalidArgument, "sensitive_index out of range");
        }
        let f = rows(features, n_rows, n_cols, "features")?;
        let options = ConsistencyOptions { k, self_inclusion };
        *out_ref(out, "out")? =
            fairness::consistency_from_predictions(p, &f, sensitive_index, options)
                .map_err(fairness_err)?;
        Ok(())
    })
}

/// Reweighing cell weights from labels and group membership, written to
/// `out[2 * a + y]`.
///
/// # Safety
/// `labels` and `sensitive` must hold `n` bytes; `out` must hold 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn fa_reweigh_cell_weights(
    labels: *const u8,
    sensitive: *const u8,
    n: size_t,
    out: *mut f64,
) -> FaStatus {
    guard(|| {
        let y = slice(labels, n, "labels")?;
        let s = slice(sensitive, n, "sensitive")?;
        binary(y, "labels")?;
        binary(s, "sensitive")?;
        let counts = fairness::group_sizes(y, s);
        let w = reweigh::cell_weights(counts).map_err(|e| (FaStatus::Reweigh, e.to_string()))?;
        let out = slice_mut(out, 4, "out")?;
        for (o, v) in out.iter_mut().zip(w.iter().flatten()) {
            *o = *v;
        }
        Ok(())
    })
}
