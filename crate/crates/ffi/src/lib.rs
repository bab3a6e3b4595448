//! C interface to the two-speaker pitch estimator.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `_free` function. Every fallible call returns a `CopitchStatus`;
//! the message of the last failure on the calling thread is available from
//! `copitch_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use copitch::config::PipelineConfig;
use copitch::pipeline::{estimate, Estimate};
use copitch::spectral::SignalBuffer;
use copitch::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CopitchStatus {
    Ok = 0,
    InvalidArgument = 1,
    Io = 2,
    Numerical = 3,
    NullPointer = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Estimator configuration bound to a sample rate.
pub struct CopitchEstimator {
    config: PipelineConfig,
    sample_rate: u32,
}

/// Two trajectories on the analysis frame grid.
pub struct CopitchResult {
    estimate: Estimate,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> CopitchStatus {
    match e.exit_code() {
        2 => CopitchStatus::Io,
        3 => CopitchStatus::Numerical,
        _ => CopitchStatus::InvalidArgument,
    }
}

fn guarded(f: impl FnOnce() -> Result<(), (CopitchStatus, String)>) -> CopitchStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CopitchStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CopitchStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (CopitchStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CopitchStatus, String) {
    (CopitchStatus::NullPointer, format!("{what} is null"))
}

/// Message for the most recent failure on this thread; empty if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn copitch_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates an estimator with default settings.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn copitch_estimator_new(sample_rate: u32, out: *mut *mut CopitchEstimator) -> CopitchStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = PipelineConfig::default();
        config.finalize(sample_rate).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(CopitchEstimator { config, sample_rate }));
        Ok(())
    })
}

/// Sets one configuration key (same keys as the CLI configuration file).
///
/// # Safety
/// `est` must come from `copitch_estimator_new`; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn copitch_estimator_set(est: *mut CopitchEstimator, key: *const c_char, value: *const c_char) -> CopitchStatus {
    guarded(|| {
        let est = est.as_mut().ok_or_else(|| null("estimator"))?;
        if key.is_null() || value.is_null() {
            return Err(null("key or value"));
        }
        let utf8 = |p: *const c_char| {
            CStr::from_ptr(p).to_str().map_err(|_| (CopitchStatus::InvalidArgument, "string is not UTF-8".to_string()))
        };
        let mut cfg = est.config;
        cfg.set(utf8(key)?, utf8(value)?).map_err(lib_err)?;
        cfg.finalize(est.sample_rate).map_err(lib_err)?;
        est.config = cfg;
        Ok(())
    })
}

/// # Safety
/// `est` must be null or come from `copitch_estimator_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn copitch_estimator_free(est: *mut CopitchEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Runs the estimator over `len` samples.
///
/// # Safety
/// `est` must be a live estimator, `samples` must point to `len` readable
/// doubles and `out` to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn copitch_estimate(
    est: *const CopitchEstimator,
    samples: *const f64,
    len: usize,
    out: *mut *mut CopitchResult,
) -> CopitchStatus {
    guarded(|| {
        let est = est.as_ref().ok_or_else(|| null("estimator"))?;
        if samples.is_null() || out.is_null() {
            return Err(null("samples or out"));
        }
        let data = std::slice::from_raw_parts(samples, len).to_vec();
        let signal = SignalBuffer::new(data, est.sample_rate).map_err(lib_err)?;
        let estimate = estimate(&signal, &est.config, false).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(CopitchResult { estimate }));
        Ok(())
    })
}

/// Number of frames in a result; 0 for a null handle.
///
/// # Safety
/// `res` must be null or a live result.
#[no_mangle]
pub unsafe extern "C" fn copitch_result_frames(res: *const CopitchResult) -> usize {
    res.as_ref().map_or(0, |r| r.estimate.times.len())
}

/// Copies frame-centre times and the two tracks (Hz, 0 = unvoiced; track 1
/// is the higher) into caller buffers of `capacity` elements each. Any of
/// the output pointers may be null to skip that series.
///
/// # Safety
/// `res` must be a live result; each non-null output must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn copitch_result_copy(
    res: *const CopitchResult,
    times: *mut f64,
    track1: *mut f64,
    track2: *mut f64,
    capacity: usize,
) -> CopitchStatus {
    guarded(|| {
        let r = &res.as_ref().ok_or_else(|| null("result"))?.estimate;
        let n = r.times.len();
        if capacity < n {
            return Err((CopitchStatus::BufferTooSmall, format!("need {n} elements, got {capacity}")));
        }
        for (dst, src) in [(times, &r.times), (track1, &r.high.f0), (track2, &r.low.f0)] {
            if !dst.is_null() {
                ptr::copy_nonoverlapping(src.as_ptr(), dst, n);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `res` must be null or a live result not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn copitch_result_free(res: *mut CopitchResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}
