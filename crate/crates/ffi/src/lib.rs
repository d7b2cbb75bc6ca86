//! C ABI over the detector, whitening and metrics routines of `ici-core`.
//!
//! Every function returns an [`IciStatus`]. On failure the thread-local
//! message from [`ici_last_error`] describes the cause. Matrices are dense
//! row-major arrays of [`IciComplex`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ici_core::detector::{calibrate_threshold, svdd_train, DetectorError, FeatureVector, SvddModel, TrainConfig};
use ici_core::metrics::{classification_metrics, ConfusionMatrix};
use ici_core::numerics::{ComplexMatrix, C64};
use ici_core::whitening::{bernstein_lower_bound, whitening_filter, BernsteinParams, WhiteningError};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IciStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// Input matrix is not Hermitian positive definite.
    NotPositiveDefinite = 4,
    /// Training data has no spread.
    ConstantData = 5,
    Io = 6,
    Parse = 7,
    /// Caller buffer too small; the required size was written back.
    BufferTooSmall = 8,
    Internal = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IciComplex {
    pub re: f64,
    pub im: f64,
}

/// Sensitivity, precision and F1. A `*_defined` flag of `false` marks a
/// vanishing denominator; the value is then 0.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IciMetrics {
    pub sensitivity: f64,
    pub precision: f64,
    pub f1: f64,
    pub sensitivity_defined: bool,
    pub precision_defined: bool,
    pub f1_defined: bool,
}

/// Opaque trained ZRD-SVDD detector.
pub struct IciSvddModel(SvddModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(IciStatus, String);

impl From<DetectorError> for Failure {
    fn from(e: DetectorError) -> Self {
        let status = match e {
            DetectorError::ConstantData(_) => IciStatus::ConstantData,
            DetectorError::DimensionMismatch { .. } | DetectorError::InconsistentDimensions(_) => IciStatus::DimensionMismatch,
            DetectorError::InvalidConfig(_) | DetectorError::EmptyDataset | DetectorError::KOutOfRange { .. } => {
                IciStatus::InvalidArgument
            }
            DetectorError::NonFiniteLoss(_) | DetectorError::NoConvergence(_) => IciStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

impl From<WhiteningError> for Failure {
    fn from(e: WhiteningError) -> Self {
        let status = match e {
            WhiteningError::Numerics(_) => IciStatus::NotPositiveDefinite,
            WhiteningError::DimensionMismatch(_) => IciStatus::DimensionMismatch,
            _ => IciStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: IciStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, records any failure or panic, and returns its status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> IciStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IciStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            IciStatus::Internal
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return fail(IciStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(IciStatus::NullPointer, format!("{what} is null")))
}

unsafe fn model<'a>(p: *const IciSvddModel) -> Result<&'a SvddModel, Failure> {
    p.as_ref().map(|m| &m.0).ok_or_else(|| Failure(IciStatus::NullPointer, "model is null".into()))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(IciStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(IciStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn to_c64(z: &IciComplex) -> C64 {
    C64::new(z.re, z.im)
}

/// Message of the last failure on this thread. The pointer stays valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ici_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ici_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Trains a ZRD-SVDD detector with default hyper-parameters and calibrates
/// its threshold at `quantile` of the training scores.
///
/// # Safety
/// `data` must point to `n_samples * dim` doubles, row per sample.
#[no_mangle]
pub unsafe extern "C" fn ici_svdd_train(
    data: *const f64,
    n_samples: usize,
    dim: usize,
    seed: u64,
    quantile: f64,
    out_model: *mut *mut IciSvddModel,
) -> IciStatus {
    guard(|| {
        let out_model = out(out_model, "out_model")?;
        if n_samples == 0 || dim == 0 {
            return fail(IciStatus::InvalidArgument, "n_samples and dim must be positive");
        }
        let len = n_samples.checked_mul(dim).ok_or_else(|| Failure(IciStatus::InvalidArgument, "size overflow".into()))?;
        let data = slice(data, len, "data")?;
        let train: Vec<FeatureVector> = data.chunks(dim).map(|c| FeatureVector(c.to_vec())).collect();
        let cfg = TrainConfig { seed, threshold_quantile: quantile, ..TrainConfig::default() };
        let (mut m, _) = svdd_train(&train, &cfg)?;
        calibrate_threshold(&mut m, &train, quantile)?;
        *out_model = Box::into_raw(Box::new(IciSvddModel(m)));
        Ok(())
    })
}

/// Parses a model from its JSON serialisation.
///
/// # Safety
/// `json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ici_svdd_from_json(json: *const c_char, out_model: *mut *mut IciSvddModel) -> IciStatus {
    guard(|| {
        let out_model = out(out_model, "out_model")?;
        let m = SvddModel::from_json(string(json, "json")?).map_err(|e| Failure(IciStatus::Parse, e.to_string()))?;
        *out_model = Box::into_raw(Box::new(IciSvddModel(m)));
        Ok(())
    })
}

/// Loads a model JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ici_svdd_load(path: *const c_char, out_model: *mut *mut IciSvddModel) -> IciStatus {
    guard(|| {
        let out_model = out(out_model, "out_model")?;
        let path = string(path, "path")?;
        let text = std::fs::read_to_string(Path::new(path)).map_err(|e| Failure(IciStatus::Io, format!("{path}: {e}")))?;
        let m = SvddModel::from_json(&text).map_err(|e| Failure(IciStatus::Parse, e.to_string()))?;
        *out_model = Box::into_raw(Box::new(IciSvddModel(m)));
        Ok(())
    })
}

/// Writes the model JSON plus a NUL into `buf`. `required` receives the size
/// including the NUL; with `buf` null only the size is reported.
///
/// # Safety
/// `buf` must be null or point to `capacity` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ici_svdd_to_json(
    model_ptr: *const IciSvddModel,
    buf: *mut c_char,
    capacity: usize,
    required: *mut usize,
) -> IciStatus {
    guard(|| {
        let json = model(model_ptr)?.to_json();
        let needed = json.len() + 1;
        *out(required, "required")? = needed;
        if buf.is_null() {
            return Ok(());
        }
        if capacity < needed {
            return fail(IciStatus::BufferTooSmall, format!("need {needed} bytes, got {capacity}"));
        }
        ptr::copy_nonoverlapping(json.as_ptr().cast::<c_char>(), buf, json.len());
        *buf.add(json.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn ici_svdd_free(model: *mut IciSvddModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Expected feature length.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ici_svdd_input_dim(model_ptr: *const IciSvddModel, out_dim: *mut usize) -> IciStatus {
    guard(|| {
        *out(out_dim, "out_dim")? = model(model_ptr)?.params.input_dim();
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ici_svdd_threshold(model_ptr: *const IciSvddModel, out_threshold: *mut f64) -> IciStatus {
    guard(|| {
        *out(out_threshold, "out_threshold")? = model(model_ptr)?.threshold;
        Ok(())
    })
}

/// Anomaly score of raw (unnormalised) features.
///
/// # Safety
/// `features` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ici_svdd_score(
    model_ptr: *const IciSvddModel,
    features: *const f64,
    len: usize,
    out_score: *mut f64,
) -> IciStatus {
    guard(|| {
        let m = model(model_ptr)?;
        let x = FeatureVector(slice(features, len, "features")?.to_vec());
        *out(out_score, "out_score")? = m.score_raw(&x)?;
        Ok(())
    })
}

/// `score > threshold`.
///
/// # Safety
/// `features` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ici_svdd_is_anomalous(
    model_ptr: *const IciSvddModel,
    features: *const f64,
    len: usize,
    out_flag: *mut bool,
) -> IciStatus {
    guard(|| {
        let m = model(model_ptr)?;
        let x = FeatureVector(slice(features, len, "features")?.to_vec());
        *out(out_flag, "out_flag")? = m.is_anomalous(&x)?;
        Ok(())
    })
}

/// Whitening filter `W = L^{-1}` of a Hermitian positive definite `n x n`
/// covariance, written row-major into `w_out`.
///
/// # Safety
/// `r` and `w_out` must each hold `n * n` elements.
#[no_mangle]
pub unsafe extern "C" fn ici_whitening_filter(r: *const IciComplex, n: usize, w_out: *mut IciComplex) -> IciStatus {
    guard(|| {
        if n == 0 {
            return fail(IciStatus::InvalidArgument, "n must be positive");
        }
        let r = slice(r, n * n, "r")?;
        if w_out.is_null() {
            return fail(IciStatus::NullPointer, "w_out is null");
        }
        let m = ComplexMatrix::from_row_major(n, n, r.iter().map(to_c64).collect());
        let w = whitening_filter(&m)?;
        for (i, z) in w.as_slice().iter().enumerate() {
            *w_out.add(i) = IciComplex { re: z.re, im: z.im };
        }
        Ok(())
    })
}

/// Lower bound on `P(||R_hat - R||_2 <= epsilon)` for `t_s` samples of
/// `g + n`, with `n` circular Gaussian of per-entry variance `sigma_m^2`.
///
/// # Safety
/// `g` must hold `n_r` elements.
#[no_mangle]
pub unsafe extern "C" fn ici_bernstein_lower_bound(
    epsilon: f64,
    t_s: usize,
    sigma_m: f64,
    g: *const IciComplex,
    n_r: usize,
    out_bound: *mut f64,
) -> IciStatus {
    guard(|| {
        let g: Vec<C64> = slice(g, n_r, "g")?.iter().map(to_c64).collect();
        let p = BernsteinParams::new(epsilon, t_s, sigma_m, g)?;
        *out(out_bound, "out_bound")? = bernstein_lower_bound(&p);
        Ok(())
    })
}

/// Sensitivity, precision and F1 of a confusion matrix.
///
/// # Safety
/// `out_metrics` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ici_classification_metrics(
    tp: u64,
    fp: u64,
    fn_: u64,
    tn: u64,
    out_metrics: *mut IciMetrics,
) -> IciStatus {
    guard(|| {
        let m = classification_metrics(&ConfusionMatrix { tp, fp, fn_, tn });
        *out(out_metrics, "out_metrics")? = IciMetrics {
            sensitivity: m.sensitivity.value().unwrap_or(0.0),
            precision: m.precision.value().unwrap_or(0.0),
            f1: m.f1.value().unwrap_or(0.0),
            sensitivity_defined: m.sensitivity.value().is_some(),
            precision_defined: m.precision.value().is_some(),
            f1_defined: m.f1.value().is_some(),
        };
        Ok(())
    })
}
