//! C ABI over the simulator.
//!
//! Every fallible call returns a [`FedsimStatus`]; on failure a message is
//! kept per thread and can be read with [`fedsim_last_error`]. Handles are
//! opaque and must be released with their matching `_free` function. Strings
//! returned through out-parameters are owned by the caller and released with
//! [`fedsim_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fedsim::nn::head::FcHead;
use fedsim::nn::{kl_divergence, param_distribution};
use fedsim::ranking::solve_quadratic;
use fedsim::sim::{emit_reports, run_experiment, write_rounds_csv, ExperimentConfig, RunOutcome, Variant};
use fedsim::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FedsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    InvalidInput = 4,
    Dimension = 5,
    Numeric = 6,
    InsufficientData = 7,
    Parse = 8,
    Io = 9,
    OutOfRange = 10,
    Internal = 11,
    Panic = 12,
}

/// Experiment configuration.
pub struct FedsimConfig {
    inner: ExperimentConfig,
}

/// Finished run: per-round logs and the final global model.
pub struct FedsimRun {
    inner: RunOutcome,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> FedsimStatus {
    match err {
        Error::Dimension(_) => FedsimStatus::Dimension,
        Error::Config(_) => FedsimStatus::InvalidConfig,
        Error::InvalidInput(_) => FedsimStatus::InvalidInput,
        Error::Numeric { .. } => FedsimStatus::Numeric,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => FedsimStatus::Parse,
        Error::InsufficientData(_) => FedsimStatus::InsufficientData,
        Error::Io(_) => FedsimStatus::Io,
        Error::Contract(_) => FedsimStatus::Internal,
    }
}

struct Failure(FedsimStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: FedsimStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `body`, records any error or panic, and converts it to a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> FedsimStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FedsimStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside fedsim");
            FedsimStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(FedsimStatus::NullPointer, format!("{name} is null"));
    }
    CStr::from_ptr(p).to_str().or_else(|_| fail(FedsimStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(FedsimStatus::NullPointer, format!("{name} is null")))
}

unsafe fn mut_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(FedsimStatus::NullPointer, format!("{name} is null")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(FedsimStatus::NullPointer, format!("{name} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s).map(CString::into_raw).or_else(|_| fail(FedsimStatus::Internal, "string contains an interior NUL"))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next fedsim call on the same thread.
#[no_mangle]
pub extern "C" fn fedsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fedsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fedsim_config_default(out: *mut *mut FedsimConfig) -> FedsimStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = Box::into_raw(Box::new(FedsimConfig { inner: ExperimentConfig::default() }));
        Ok(())
    })
}

/// Parses and validates a JSON configuration. Missing keys take defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fedsim_config_from_json(json: *const c_char, out: *mut *mut FedsimConfig) -> FedsimStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        let cfg = ExperimentConfig::from_json(str_arg(json, "json")?)?;
        cfg.validate()?;
        *out = Box::into_raw(Box::new(FedsimConfig { inner: cfg }));
        Ok(())
    })
}

/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fedsim_config_to_json(config: *const FedsimConfig, out: *mut *mut c_char) -> FedsimStatus {
    guard(|| {
        let cfg = ref_arg(config, "config")?;
        let out = mut_arg(out, "out")?;
        *out = into_c_string(cfg.inner.to_json())?;
        Ok(())
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fedsim_config_set_seed(config: *mut FedsimConfig, seed: u64) -> FedsimStatus {
    guard(|| {
        mut_arg(config, "config")?.inner.seed = seed;
        Ok(())
    })
}

/// Sets the variant by name: `fedavg`, `fedprox[:mu]`, `fedcab`, `feddecab`,
/// `fedprox+[:mu]` or `local-only`.
///
/// # Safety
/// `config` must be a live handle and `name` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fedsim_config_set_variant(config: *mut FedsimConfig, name: *const c_char) -> FedsimStatus {
    guard(|| {
        let cfg = mut_arg(config, "config")?;
        let v: Variant = str_arg(name, "name")?.parse().map_err(|e: Error| Failure::from(e))?;
        cfg.inner.variant = v;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn fedsim_config_free(config: *mut FedsimConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the experiment to completion. A run that stops early on a non-finite
/// value still succeeds; check [`fedsim_run_aborted`].
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fedsim_run(config: *const FedsimConfig, out: *mut *mut FedsimRun) -> FedsimStatus {
    guard(|| {
        let cfg = ref_arg(config, "config")?;
        let out = mut_arg(out, "out")?;
        let outcome = run_experiment(&cfg.inner)?;
        *out = Box::into_raw(Box::new(FedsimRun { inner: outcome }));
        Ok(())
    })
}

/// Number of logged rounds, or 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fedsim_run_rounds(run: *const FedsimRun) -> usize {
    run.as_ref().map_or(0, |r| r.inner.logs.len())
}

/// Whether the run stopped early, or false for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fedsim_run_aborted(run: *const FedsimRun) -> bool {
    run.as_ref().is_some_and(|r| r.inner.aborted.is_some())
}

/// Global test RMSE after the round at zero-based `index`.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fedsim_run_round_rmse(run: *const FedsimRun, index: usize, out: *mut f64) -> FedsimStatus {
    guard(|| {
        let r = ref_arg(run, "run")?;
        let out = mut_arg(out, "out")?;
        match r.inner.logs.get(index) {
            Some(log) => {
                *out = log.global_rmse;
                Ok(())
            }
            None => fail(FedsimStatus::OutOfRange, format!("round index {index} out of {}", r.inner.logs.len())),
        }
    })
}

/// Uploads made by `client` over the whole run.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fedsim_run_uploads(run: *const FedsimRun, client: usize, out: *mut u32) -> FedsimStatus {
    guard(|| {
        let r = ref_arg(run, "run")?;
        let out = mut_arg(out, "out")?;
        match r.inner.uploads.get(client) {
            Some(&u) => {
                *out = u;
                Ok(())
            }
            None => fail(FedsimStatus::OutOfRange, format!("client {client} out of {}", r.inner.uploads.len())),
        }
    })
}

/// The round log in rounds.csv format.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fedsim_run_rounds_csv(run: *const FedsimRun, out: *mut *mut c_char) -> FedsimStatus {
    guard(|| {
        let r = ref_arg(run, "run")?;
        let out = mut_arg(out, "out")?;
        let mut buf = Vec::new();
        write_rounds_csv(&mut buf, &r.inner.logs)?;
        let text = String::from_utf8(buf).or_else(|_| fail(FedsimStatus::Internal, "CSV is not UTF-8"))?;
        *out = into_c_string(text)?;
        Ok(())
    })
}

/// Writes rounds.csv, summary.json and curves.svg into `dir`, creating it.
///
/// # Safety
/// `run` must be a live handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn fedsim_run_write_reports(run: *const FedsimRun, dir: *const c_char) -> FedsimStatus {
    guard(|| {
        let r = ref_arg(run, "run")?;
        emit_reports(&r.inner.logs, Path::new(str_arg(dir, "dir")?))?;
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn fedsim_run_free(run: *mut FedsimRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Smoothed absolute-value distribution of `len` parameters, written to `out`.
///
/// # Safety
/// `params` and `out` must each point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fedsim_param_distribution(params: *const f64, len: usize, out: *mut f64) -> FedsimStatus {
    guard(|| {
        let x = slice_arg(params, len, "params")?;
        let q = param_distribution(x)?;
        if out.is_null() {
            return fail(FedsimStatus::NullPointer, "out is null");
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&q);
        Ok(())
    })
}

/// `KL(p || q)` of two strictly positive distributions of length `len`.
///
/// # Safety
/// `p` and `q` must each point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fedsim_kl_divergence(p: *const f64, q: *const f64, len: usize, out: *mut f64) -> FedsimStatus {
    guard(|| {
        let (p, q) = (slice_arg(p, len, "p")?, slice_arg(q, len, "q")?);
        let out = mut_arg(out, "out")?;
        *out = kl_divergence(p, q)?;
        Ok(())
    })
}

/// Coefficients of the parabola through `(0, alpha)`, `(m, 1)`, `(2m, alpha)`.
///
/// # Safety
/// `b0`, `b1` and `b2` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fedsim_solve_quadratic(
    alpha: f64,
    m: usize,
    b0: *mut f64,
    b1: *mut f64,
    b2: *mut f64,
) -> FedsimStatus {
    guard(|| {
        let (o0, o1, o2) = (mut_arg(b0, "b0")?, mut_arg(b1, "b1")?, mut_arg(b2, "b2")?);
        (*o0, *o1, *o2) = solve_quadratic(alpha, m)?;
        Ok(())
    })
}

/// Values carried by an FC head of the given shape: `hidden * output + output`.
#[no_mangle]
pub extern "C" fn fedsim_fc_len(hidden: usize, output: usize) -> usize {
    hidden.saturating_mul(output).saturating_add(output)
}

/// Decodes an encoded FC head. On success `*n_values` is set; when `values`
/// is non-null and `capacity` is large enough the values are copied into it,
/// otherwise `FEDSIM_STATUS_OUT_OF_RANGE` is returned with `*n_values` set
/// so the caller can retry.
///
/// # Safety
/// `bytes` must point to `len` bytes; `values` to `capacity` doubles or be
/// null; the remaining out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fedsim_fc_head_decode(
    bytes: *const u8,
    len: usize,
    hidden: *mut usize,
    output: *mut usize,
    values: *mut f64,
    capacity: usize,
    n_values: *mut usize,
) -> FedsimStatus {
    guard(|| {
        if bytes.is_null() {
            return fail(FedsimStatus::NullPointer, "bytes is null");
        }
        let head = FcHead::decode(std::slice::from_raw_parts(bytes, len))?;
        let (h, o, n) = (mut_arg(hidden, "hidden")?, mut_arg(output, "output")?, mut_arg(n_values, "n_values")?);
        (*h, *o, *n) = (head.hidden, head.output, head.values.len());
        if values.is_null() || capacity < head.values.len() {
            return fail(FedsimStatus::OutOfRange, format!("need room for {} values", head.values.len()));
        }
        std::slice::from_raw_parts_mut(values, head.values.len()).copy_from_slice(&head.values);
        Ok(())
    })
}
