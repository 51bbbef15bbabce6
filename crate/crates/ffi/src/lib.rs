//! C ABI over `spectral-oplearn`.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Every fallible call returns an
//! [`OplearnStatus`]; on failure [`oplearn_last_error`] describes the cause.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use spectral_oplearn::config::ExperimentConfig;
use spectral_oplearn::harness::Experiment;
use spectral_oplearn::schedules::{multilevel_schedule, LevelSchedule};
use spectral_oplearn::spectral::{bg_norm, OperatorMatrix};
use spectral_oplearn::{Error, EstimatorKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OplearnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    InvalidArgument = 3,
    Numerical = 4,
    BufferTooSmall = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// Validated config together with its realized ground truth.
pub struct OplearnConfig {
    experiment: Experiment,
}

pub struct OplearnSchedule {
    schedule: LevelSchedule,
}

pub struct OplearnOperator {
    op: OperatorMatrix,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct OplearnRates {
    pub eta1: f64,
    pub eta2: f64,
    pub u: f64,
    pub input_rate: f64,
    pub output_rate: f64,
}

/// One staircase level; rows are 1-based, `row_end` exclusive.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct OplearnLevel {
    pub x: f64,
    pub y: f64,
    pub lambda: f64,
    pub row_start: usize,
    pub row_end: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> OplearnStatus {
    match err {
        e if e.is_config_error() => OplearnStatus::InvalidConfig,
        Error::Factorization { .. } | Error::DegenerateFit(_) => OplearnStatus::Numerical,
        _ => OplearnStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (OplearnStatus, String)>) -> OplearnStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OplearnStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            OplearnStatus::Panic
        }
    }
}

fn lib<T>(r: spectral_oplearn::Result<T>) -> Result<T, (OplearnStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (OplearnStatus, String) {
    (OplearnStatus::NullPointer, format!("`{what}` is null"))
}

/// # Safety
/// `p` must be null or valid for reads of `T`.
unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (OplearnStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `p` must be null or valid for writes of `T`.
unsafe fn write<T>(p: *mut T, value: T, what: &str) -> Result<(), (OplearnStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn oplearn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses and validates a JSON config and builds its ground truth.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oplearn_config_from_json(
    json: *const c_char,
    out: *mut *mut OplearnConfig,
) -> OplearnStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| {
            (
                OplearnStatus::InvalidConfig,
                format!("config is not UTF-8: {e}"),
            )
        })?;
        let cfg = lib(ExperimentConfig::from_json_str(text))?;
        let experiment = lib(Experiment::new(cfg))?;
        out.write(Box::into_raw(Box::new(OplearnConfig { experiment })));
        Ok(())
    })
}

/// Writes the built-in template config as JSON into `buf` (nul-terminated).
/// `needed` receives the required size including the terminator.
///
/// # Safety
/// `buf` must be valid for `len` bytes (or null with `len == 0`); `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn oplearn_template_json(
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> OplearnStatus {
    guard(|| {
        let text = ExperimentConfig::template().to_json_pretty();
        let bytes = text.as_bytes();
        if !needed.is_null() {
            needed.write(bytes.len() + 1);
        }
        if len < bytes.len() + 1 || buf.is_null() {
            return Err((
                OplearnStatus::BufferTooSmall,
                format!("need {} bytes, got {len}", bytes.len() + 1),
            ));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), bytes.len());
        buf.add(bytes.len()).write(0);
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from [`oplearn_config_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oplearn_config_free(cfg: *mut OplearnConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live config handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oplearn_config_rates(
    cfg: *const OplearnConfig,
    out: *mut OplearnRates,
) -> OplearnStatus {
    guard(|| {
        let r = deref(cfg, "cfg")?.experiment.cfg().rates();
        write(
            out,
            OplearnRates {
                eta1: r.eta1,
                eta2: r.eta2,
                u: r.u,
                input_rate: r.input_rate,
                output_rate: r.output_rate,
            },
            "out",
        )
    })
}

/// Builds the multilevel staircase for `n` samples.
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oplearn_schedule_new(
    cfg: *const OplearnConfig,
    n: usize,
    out: *mut *mut OplearnSchedule,
) -> OplearnStatus {
    guard(|| {
        let cfg = deref(cfg, "cfg")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let schedule = lib(multilevel_schedule(cfg.experiment.cfg(), n))?;
        out.write(Box::into_raw(Box::new(OplearnSchedule { schedule })));
        Ok(())
    })
}

/// Number of levels, or 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live schedule handle.
#[no_mangle]
pub unsafe extern "C" fn oplearn_schedule_len(s: *const OplearnSchedule) -> usize {
    s.as_ref().map_or(0, |s| s.schedule.len())
}

/// # Safety
/// `s` must be a live schedule handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oplearn_schedule_level(
    s: *const OplearnSchedule,
    index: usize,
    out: *mut OplearnLevel,
) -> OplearnStatus {
    guard(|| {
        let s = deref(s, "schedule")?;
        let level = s.schedule.levels.get(index).ok_or_else(|| {
            (
                OplearnStatus::OutOfRange,
                format!("level {index} out of range ({} levels)", s.schedule.len()),
            )
        })?;
        write(
            out,
            OplearnLevel {
                x: level.x,
                y: level.y,
                lambda: level.lambda,
                row_start: level.rows.start,
                row_end: level.rows.end,
            },
            "out",
        )
    })
}

/// # Safety
/// `s` must be null or a schedule handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oplearn_schedule_free(s: *mut OplearnSchedule) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Copy of the config's ground-truth operator.
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oplearn_ground_truth(
    cfg: *const OplearnConfig,
    out: *mut *mut OplearnOperator,
) -> OplearnStatus {
    guard(|| {
        let cfg = deref(cfg, "cfg")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let op = cfg.experiment.a0().clone();
        out.write(Box::into_raw(Box::new(OplearnOperator { op })));
        Ok(())
    })
}

/// # Safety
/// `op` must be a live operator handle; `d_out` and `d_in` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oplearn_operator_dims(
    op: *const OplearnOperator,
    d_out: *mut usize,
    d_in: *mut usize,
) -> OplearnStatus {
    guard(|| {
        let op = deref(op, "op")?;
        write(d_out, op.op.d_out(), "d_out")?;
        write(d_in, op.op.d_in(), "d_in")
    })
}

/// Copies the `d_out × d_in` coefficients row-major into `buf`.
///
/// # Safety
/// `op` must be a live operator handle; `buf` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn oplearn_operator_copy(
    op: *const OplearnOperator,
    buf: *mut f64,
    len: usize,
) -> OplearnStatus {
    guard(|| {
        let op = deref(op, "op")?;
        let m = op.op.matrix();
        let need = m.len();
        if len < need {
            return Err((
                OplearnStatus::BufferTooSmall,
                format!("need {need} doubles, got {len}"),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        let out = std::slice::from_raw_parts_mut(buf, need);
        for j in 0..m.nrows() {
            for i in 0..m.ncols() {
                out[j * m.ncols() + i] = m[(j, i)];
            }
        }
        Ok(())
    })
}

/// The `(b, g)`-norm of an operator.
///
/// # Safety
/// `op` must be a live operator handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oplearn_operator_bg_norm(
    op: *const OplearnOperator,
    b: f64,
    g: f64,
    out: *mut f64,
) -> OplearnStatus {
    guard(|| {
        let op = deref(op, "op")?;
        if !(b.is_finite() && g.is_finite()) {
            return Err((
                OplearnStatus::InvalidArgument,
                "exponents must be finite".into(),
            ));
        }
        write(out, bg_norm(&op.op, b, g), "out")
    })
}

/// # Safety
/// `op` must be null or an operator handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oplearn_operator_free(op: *mut OplearnOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Squared `(β', γ')` error of one trial. `estimator` is one of
/// `"single"`, `"variance"`, `"bias"`, `"multilevel"`.
///
/// # Safety
/// `cfg` must be a live config handle, `estimator` a nul-terminated string and
/// `error_sq` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oplearn_run_trial(
    cfg: *const OplearnConfig,
    n: usize,
    trial: usize,
    estimator: *const c_char,
    error_sq: *mut f64,
) -> OplearnStatus {
    guard(|| {
        let cfg = deref(cfg, "cfg")?;
        if estimator.is_null() {
            return Err(null("estimator"));
        }
        let name = CStr::from_ptr(estimator).to_str().map_err(|_| {
            (
                OplearnStatus::InvalidArgument,
                "estimator is not UTF-8".to_string(),
            )
        })?;
        let kind: EstimatorKind = lib(name.parse())?;
        let outcome = lib(cfg.experiment.run_trial(n, trial, kind))?;
        write(error_sq, outcome.error_sq, "error_sq")
    })
}
