//! C ABI for lyapnet.
//!
//! Every fallible function returns an [`LyStatus`]. On failure the message is
//! available from [`ly_last_error`] on the same thread. Handles are opaque and
//! must be released with their `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use lyapnet::cnn::{load_model, predict_batch, ModelParams};
use lyapnet::dynsys::{SystemKind, SystemParams, SystemSpec};
use lyapnet::lyapunov::{benettin_spectrum, Profile};
use lyapnet::pipeline::{generate_prediction_series, normalize, SERIES_LEN};
use lyapnet::rng::{indexed_rng, Stream};
use lyapnet::sweep::predict_ensemble;
use lyapnet::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LyStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numeric = 3,
    Io = 4,
    Format = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LySystem {
    Lorenz = 0,
    Coupled = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LyProfile {
    Paper = 0,
    Desk = 1,
}

/// One trained network.
pub struct LyModel {
    params: ModelParams,
}

/// Models sharing one architecture; predictions are mean and population std over members.
pub struct LyEnsemble {
    models: Vec<ModelParams>,
}

struct Fail(LyStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Contract(_) | Error::Config(_) | Error::Shortage { .. } => LyStatus::InvalidArgument,
            Error::Overflow { .. }
            | Error::TangentOverflow { .. }
            | Error::RankDeficient { .. }
            | Error::Numeric(_) => LyStatus::Numeric,
            Error::Io { .. } => LyStatus::Io,
            Error::Format { .. } => LyStatus::Format,
        };
        Fail(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LyStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LyStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal panic: {msg}"));
            LyStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(LyStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(LyStatus::InvalidArgument, msg.into())
}

unsafe fn input<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn output<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

fn copy_out(src: &[f64], dst: &mut [f64], what: &str) -> Result<(), Fail> {
    if src.len() != dst.len() {
        return Err(invalid(format!(
            "{what} holds {} values, {} are produced",
            dst.len(),
            src.len()
        )));
    }
    dst.copy_from_slice(src);
    Ok(())
}

fn kind(system: LySystem) -> SystemKind {
    match system {
        LySystem::Lorenz => SystemKind::Lorenz,
        LySystem::Coupled => SystemKind::CoupledLorenz,
    }
}

fn spec(system: LySystem, sigma: f64, r: f64, b: f64) -> Result<SystemSpec, Fail> {
    Ok(SystemSpec::new(kind(system), SystemParams::new(sigma, r, b))?)
}

/// Message of the last failure on this thread, or an empty string.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ly_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ly_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length of the series a model expects.
#[no_mangle]
pub extern "C" fn ly_series_len() -> usize {
    SERIES_LEN
}

/// Number of exponents of a system (3 or 6).
#[no_mangle]
pub extern "C" fn ly_system_dim(system: LySystem) -> usize {
    kind(system).dim()
}

/// Loads a model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ly_model_load(path: *const c_char, out: *mut *mut LyModel) -> LyStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = load_model(&path_arg(path)?, None)?;
        *out = Box::into_raw(Box::new(LyModel { params }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from `ly_model_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ly_model_free(model: *mut LyModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of exponents the model predicts.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ly_model_n_outputs(model: *const LyModel, out: *mut usize) -> LyStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.params.arch.n_outputs;
        Ok(())
    })
}

/// Predicts the spectrum of one normalized series.
///
/// # Safety
/// `series` must point to `len` doubles and `out` to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ly_model_predict(
    model: *const LyModel,
    series: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> LyStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let x = input(series, len, "series")?;
        let y = output(out, out_len, "out")?;
        let pred = predict_batch(&m.params, &[x])?
            .pop()
            .expect("one input gives one output");
        copy_out(&pred, y, "out")
    })
}

/// Creates an empty ensemble.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ly_ensemble_new(out: *mut *mut LyEnsemble) -> LyStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = Box::into_raw(Box::new(LyEnsemble { models: Vec::new() }));
        Ok(())
    })
}

/// Loads every model listed in a directory written by `lyapnet train`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ly_ensemble_load_dir(dir: *const c_char, out: *mut *mut LyEnsemble) -> LyStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let (_, models) = lyapnet::cli::load_ensemble(&path_arg(dir)?)?;
        *out = Box::into_raw(Box::new(LyEnsemble { models }));
        Ok(())
    })
}

/// Loads a model file and appends it; its architecture must match the existing members.
///
/// # Safety
/// `ensemble` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ly_ensemble_add_file(ensemble: *mut LyEnsemble, path: *const c_char) -> LyStatus {
    guard(|| {
        let e = ensemble.as_mut().ok_or_else(|| null("ensemble"))?;
        let params = load_model(&path_arg(path)?, None)?;
        if e.models.first().is_some_and(|m| m.arch != params.arch) {
            return Err(invalid("model architecture differs from the ensemble's"));
        }
        e.models.push(params);
        Ok(())
    })
}

/// Number of members.
///
/// # Safety
/// `ensemble` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ly_ensemble_size(ensemble: *const LyEnsemble, out: *mut usize) -> LyStatus {
    guard(|| {
        let e = ensemble.as_ref().ok_or_else(|| null("ensemble"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = e.models.len();
        Ok(())
    })
}

/// Mean and population standard deviation of the members' predictions.
///
/// # Safety
/// `series` must point to `len` doubles; `mean` and `std` to `n_out` doubles each.
#[no_mangle]
pub unsafe extern "C" fn ly_ensemble_predict(
    ensemble: *const LyEnsemble,
    series: *const f64,
    len: usize,
    mean: *mut f64,
    std: *mut f64,
    n_out: usize,
) -> LyStatus {
    guard(|| {
        let e = ensemble.as_ref().ok_or_else(|| null("ensemble"))?;
        let x = input(series, len, "series")?;
        let (m, s) = predict_ensemble(&e.models, x)?;
        copy_out(&m, output(mean, n_out, "mean")?, "mean")?;
        copy_out(&s, output(std, n_out, "std")?, "std")
    })
}

/// Releases an ensemble. Null is ignored.
///
/// # Safety
/// `ensemble` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ly_ensemble_free(ensemble: *mut LyEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

/// Classical spectrum (descending) from the default initial state.
/// A `measure_time` of zero or less keeps the profile's value.
///
/// # Safety
/// `out` must point to `out_len` doubles, with `out_len` equal to the system dimension.
#[no_mangle]
pub unsafe extern "C" fn ly_classical_spectrum(
    system: LySystem,
    sigma: f64,
    r: f64,
    b: f64,
    profile: LyProfile,
    measure_time: f64,
    out: *mut f64,
    out_len: usize,
) -> LyStatus {
    guard(|| {
        let y = output(out, out_len, "out")?;
        let spec = spec(system, sigma, r, b)?;
        let profile = match profile {
            LyProfile::Paper => Profile::Paper,
            LyProfile::Desk => Profile::Desk,
        };
        let mut cfg = profile.le_config();
        if measure_time > 0.0 {
            cfg = cfg.with_measure_time(measure_time);
        }
        let (le, _) = benettin_spectrum(&spec, &kind(system).default_initial_state(), &cfg)?;
        copy_out(le.as_slice(), y, "out")
    })
}

/// Maps a series onto [0, 1]. A constant series becomes one value drawn from `(seed, index)`.
///
/// # Safety
/// `series` and `out` must each point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ly_normalize(
    series: *const f64,
    len: usize,
    seed: u64,
    index: u64,
    out: *mut f64,
) -> LyStatus {
    guard(|| {
        let x = input(series, len, "series")?;
        let y = output(out, len, "out")?;
        let mut rng = indexed_rng(seed, Stream::Sweep, index);
        copy_out(&normalize(x, &mut rng)?, y, "out")
    })
}

/// Normalized inference series at one parameter point, identical to sweep cell `index` run with `seed`.
///
/// # Safety
/// `out` must point to `out_len` doubles, with `out_len` equal to `ly_series_len()`.
#[no_mangle]
pub unsafe extern "C" fn ly_prediction_series(
    system: LySystem,
    sigma: f64,
    r: f64,
    b: f64,
    seed: u64,
    index: u64,
    out: *mut f64,
    out_len: usize,
) -> LyStatus {
    guard(|| {
        let y = output(out, out_len, "out")?;
        let spec = spec(system, sigma, r, b)?;
        let mut rng = indexed_rng(seed, Stream::Sweep, index);
        copy_out(&generate_prediction_series(&spec, &mut rng)?, y, "out")
    })
}
