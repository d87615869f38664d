//! C ABI over `wet-core`.
//!
//! Every fallible function returns a [`WetStatus`]; on failure the message
//! is available from [`wet_last_error_message`] on the same thread. Models
//! are opaque handles created by [`wet_model_load`] and released with
//! [`wet_model_free`]. Strings are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use wet_core::eval::{metrics, paired_t_test, ConfusionMatrix};
use wet_core::pipeline::Predictor;
use wet_core::WetError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    Dimension = 6,
    Numeric = 7,
    Lookup = 8,
    Diverged = 9,
    Internal = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

/// Opaque model handle.
pub struct WetModel {
    predictor: Predictor,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WetMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of ratios whose denominator was zero (reported as 0).
    pub degenerate_count: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WetTTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub mean_diff: f64,
    /// 1 when the paired differences have zero spread.
    pub degenerate: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &WetError) -> WetStatus {
    match e {
        WetError::Dimension { .. } => WetStatus::Dimension,
        WetError::Validation(_) => WetStatus::Validation,
        WetError::Numeric { .. } => WetStatus::Numeric,
        WetError::Io { .. } => WetStatus::Io,
        WetError::Parse(_) => WetStatus::Parse,
        WetError::Lookup(_) => WetStatus::Lookup,
        WetError::Diverged { .. } => WetStatus::Diverged,
        WetError::Internal(_) => WetStatus::Internal,
    }
}

struct Fail(WetStatus, String);

impl From<WetError> for Fail {
    fn from(e: WetError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> WetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WetStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside wet-ffi");
            WetStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(WetStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(WetStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// Message of the last failure on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wet_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn wet_clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn wet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model bundle written by `wet train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wet_model_load(path: *const c_char, out: *mut *mut WetModel) -> WetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let path = read_str(path, "path")?;
        let predictor = Predictor::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(WetModel { predictor }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`wet_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn wet_model_free(model: *mut WetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of branch probabilities [`wet_model_predict_branches`] writes.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wet_model_branch_count(
    model: *const WetModel,
    out: *mut usize,
) -> WetStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.predictor.model.branch_count();
        Ok(())
    })
}

/// Decision threshold stored with the model.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wet_model_threshold(model: *const WetModel, out: *mut f64) -> WetStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.predictor.threshold;
        Ok(())
    })
}

/// Ensemble probability that the text is positive.
///
/// # Safety
/// `model` must be a live handle, `text` NUL-terminated, `probability` writable.
#[no_mangle]
pub unsafe extern "C" fn wet_model_predict(
    model: *const WetModel,
    text: *const c_char,
    followers: u64,
    likes: u64,
    replies: u64,
    retweets: u64,
    probability: *mut f64,
) -> WetStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = probability.as_mut().ok_or_else(|| null("probability"))?;
        let text = read_str(text, "text")?;
        *out = m
            .predictor
            .predict_text(text, [followers, likes, replies, retweets])?
            .probability;
        Ok(())
    })
}

/// Like [`wet_model_predict`], also writing each branch's probability into
/// `branches` (text blocks first, then the feature branch).
///
/// # Safety
/// As [`wet_model_predict`]; `branches` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn wet_model_predict_branches(
    model: *const WetModel,
    text: *const c_char,
    followers: u64,
    likes: u64,
    replies: u64,
    retweets: u64,
    probability: *mut f64,
    branches: *mut f64,
    capacity: usize,
) -> WetStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = probability.as_mut().ok_or_else(|| null("probability"))?;
        if branches.is_null() {
            return Err(null("branches"));
        }
        let n = m.predictor.model.branch_count();
        if capacity < n {
            return Err(Fail(
                WetStatus::BufferTooSmall,
                format!("need {n} slots, got {capacity}"),
            ));
        }
        let text = read_str(text, "text")?;
        let p = m
            .predictor
            .predict_text(text, [followers, likes, replies, retweets])?;
        *out = p.probability;
        std::slice::from_raw_parts_mut(branches, n).copy_from_slice(&p.branch_probs);
        Ok(())
    })
}

/// Accuracy, precision, recall and F1 of the positive class.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wet_metrics_from_counts(
    tp: u64,
    fp: u64,
    tn: u64,
    fn_: u64,
    out: *mut WetMetrics,
) -> WetStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = metrics(&ConfusionMatrix::new(tp, fp, tn, fn_))?;
        *out = WetMetrics {
            accuracy: r.accuracy,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            degenerate_count: r.degenerate.len() as u32,
        };
        Ok(())
    })
}

/// Two-sided paired t-test over `n` score pairs.
///
/// # Safety
/// `a` and `b` must each hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wet_paired_t_test(
    a: *const f64,
    b: *const f64,
    n: usize,
    out: *mut WetTTest,
) -> WetStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if a.is_null() || b.is_null() {
            return Err(null("sample"));
        }
        let (a, b) = (
            std::slice::from_raw_parts(a, n),
            std::slice::from_raw_parts(b, n),
        );
        let r = paired_t_test(a, b)?;
        *out = WetTTest {
            t: r.t,
            df: r.df,
            p_value: r.p_value,
            mean_diff: r.mean_diff,
            degenerate: r.degenerate as u8,
        };
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_codes_are_stable() {
        assert_eq!(WetStatus::Ok as i32, 0);
        assert_eq!(WetStatus::Panic as i32, 12);
    }

    #[test]
    fn error_message_is_thread_local() {
        set_error("boom");
        let here = unsafe { CStr::from_ptr(wet_last_error_message()) }
            .to_str()
            .unwrap()
            .to_string();
        assert_eq!(here, "boom");
        let other = std::thread::spawn(|| wet_last_error_message().is_null())
            .join()
            .unwrap();
        assert!(other);
        wet_clear_last_error();
        assert!(wet_last_error_message().is_null());
    }

    #[test]
    fn interior_nul_does_not_drop_message() {
        set_error("a\0b");
        assert!(!wet_last_error_message().is_null());
    }
}
