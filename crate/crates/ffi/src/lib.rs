//! C ABI over the `bottomk` library.
//!
//! Objects are opaque heap handles released by their `*_free` function.
//! Every fallible call returns a [`BkStatus`] and writes its result through
//! an out-pointer; on failure [`bk_last_error`] describes the error. Strings
//! returned by the library are released with [`bk_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bottomk::estimators::Response;
use bottomk::{
    merge, privacy_bounds, sketch_set, std_estimate, BottomKSketch, CardinalityEstimate, Error,
    EstimatorSpec, Key, Responder, SketchRandomness,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BkStatus {
    Ok = 0,
    InvalidArgument = 1,
    IncompatibleSketches = 2,
    Parse = 3,
    Io = 4,
    NullPointer = 5,
    Panic = 6,
}

/// Keyed priority function over a universe `[0, n)`.
pub struct BkRandomness(SketchRandomness);

/// A bottom-k sketch.
pub struct BkSketch(BottomKSketch);

/// A robust estimator together with its noise stream and, for the tracking
/// variant, its charge ledger.
pub struct BkEstimator(Responder);

/// A cardinality answer. `deactivated` is -1 unless the tracking estimator
/// produced it.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BkEstimate {
    pub value: f64,
    pub exact: bool,
    pub saturated: bool,
    pub deactivated: i64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BkPrivacyBounds {
    pub pure_epsilon: f64,
    pub pure_delta: f64,
    pub approx_epsilon: f64,
    pub approx_delta: f64,
    pub q: f64,
    pub delta_star: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> BkStatus {
    match err {
        Error::InvalidArgument(_) | Error::Experiment { .. } => BkStatus::InvalidArgument,
        Error::IncompatibleSketches(_) => BkStatus::IncompatibleSketches,
        Error::Parse(_) | Error::Json(_) => BkStatus::Parse,
        Error::Io(_) => BkStatus::Io,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Utf8,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard<F>(f: F) -> BkStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BkStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            BkStatus::NullPointer
        }
        Ok(Err(Failure::Utf8)) => {
            set_last_error("string argument is not valid UTF-8".into());
            BkStatus::Parse
        }
        Err(_) => {
            set_last_error("internal panic".into());
            BkStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn read_str<'a>(s: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| Failure::Utf8)
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s)
        .expect("JSON has no interior NULs")
        .into_raw()
}

fn estimate_of(est: CardinalityEstimate) -> BkEstimate {
    BkEstimate {
        value: est.value,
        exact: est.exact,
        saturated: est.saturated,
        deactivated: -1,
    }
}

fn response_of(r: Response) -> BkEstimate {
    BkEstimate {
        value: r.estimate,
        exact: r.exact,
        saturated: r.saturated,
        deactivated: r.deactivated.map_or(-1, |d| d as i64),
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bk_randomness_new(
    seed: u64,
    n: u64,
    out: *mut *mut BkRandomness,
) -> BkStatus {
    guard(|| {
        let r = SketchRandomness::new(seed, n)?;
        put(out, Box::into_raw(Box::new(BkRandomness(r))), "out")
    })
}

/// # Safety
/// `r` must be NULL or a live handle from [`bk_randomness_new`].
#[no_mangle]
pub unsafe extern "C" fn bk_randomness_free(r: *mut BkRandomness) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// # Safety
/// `r` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bk_randomness_priority(
    r: *const BkRandomness,
    key: u64,
    out: *mut f64,
) -> BkStatus {
    guard(|| {
        let r = deref(r, "randomness")?;
        put(out, r.0.priority(Key(key))?, "out")
    })
}

/// Sketch of the set of `len` key ids at `keys`; duplicates are ignored.
///
/// # Safety
/// `r` must be a live handle, `keys` must point to `len` readable ids (or be
/// NULL with `len == 0`), and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bk_sketch_from_keys(
    r: *const BkRandomness,
    keys: *const u64,
    len: usize,
    k: usize,
    out: *mut *mut BkSketch,
) -> BkStatus {
    guard(|| {
        let r = deref(r, "randomness")?;
        let ids: &[u64] = if len == 0 {
            &[]
        } else if keys.is_null() {
            return Err(Failure::Null("keys"));
        } else {
            std::slice::from_raw_parts(keys, len)
        };
        let s = sketch_set(&r.0, ids.iter().map(|&i| Key(i)), k)?;
        put(out, Box::into_raw(Box::new(BkSketch(s))), "out")
    })
}

/// # Safety
/// `a` and `b` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bk_sketch_merge(
    a: *const BkSketch,
    b: *const BkSketch,
    out: *mut *mut BkSketch,
) -> BkStatus {
    guard(|| {
        let m = merge(&deref(a, "a")?.0, &deref(b, "b")?.0)?;
        put(out, Box::into_raw(Box::new(BkSketch(m))), "out")
    })
}

/// Number of entries, or 0 for NULL.
///
/// # Safety
/// `s` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bk_sketch_len(s: *const BkSketch) -> usize {
    s.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `s` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bk_sketch_std_estimate(
    s: *const BkSketch,
    out: *mut BkEstimate,
) -> BkStatus {
    guard(|| {
        let s = deref(s, "sketch")?;
        put(out, estimate_of(std_estimate(&s.0)), "out")
    })
}

/// # Safety
/// `s` must be a live handle and `out` a valid pointer. The string written
/// to `out` is released with [`bk_string_free`].
#[no_mangle]
pub unsafe extern "C" fn bk_sketch_to_json(s: *const BkSketch, out: *mut *mut c_char) -> BkStatus {
    guard(|| {
        let s = deref(s, "sketch")?;
        put(out, into_c_string(s.0.to_json()), "out")
    })
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bk_sketch_from_json(
    json: *const c_char,
    out: *mut *mut BkSketch,
) -> BkStatus {
    guard(|| {
        let s = BottomKSketch::from_json(read_str(json, "json")?)?;
        put(out, Box::into_raw(Box::new(BkSketch(s))), "out")
    })
}

/// # Safety
/// `s` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bk_sketch_free(s: *mut BkSketch) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Robust estimator from an estimator config JSON object with fields `k`,
/// `r`, `n`, `alpha`, `beta` and optional `variant`, `seed`, `k_constant`,
/// `noise`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bk_estimator_new(
    config_json: *const c_char,
    out: *mut *mut BkEstimator,
) -> BkStatus {
    guard(|| {
        let spec: EstimatorSpec =
            serde_json::from_str(read_str(config_json, "config_json")?).map_err(Error::from)?;
        let responder = Responder::robust(spec.build()?)?;
        put(out, Box::into_raw(Box::new(BkEstimator(responder))), "out")
    })
}

/// Answers one query; the tracking variant also updates its ledger.
///
/// # Safety
/// `e` and `s` must be live handles, not used concurrently, and `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bk_estimator_query(
    e: *mut BkEstimator,
    s: *const BkSketch,
    out: *mut BkEstimate,
) -> BkStatus {
    guard(|| {
        let e = deref_mut(e, "estimator")?;
        let s = deref(s, "sketch")?;
        put(out, response_of(e.0.respond(&s.0)?), "out")
    })
}

/// Charge ledger of a tracking estimator as JSON.
///
/// # Safety
/// `e` must be a live handle and `out` a valid pointer. The string written
/// to `out` is released with [`bk_string_free`].
#[no_mangle]
pub unsafe extern "C" fn bk_estimator_ledger_json(
    e: *const BkEstimator,
    out: *mut *mut c_char,
) -> BkStatus {
    guard(|| {
        let e = deref(e, "estimator")?;
        let ledger =
            e.0.ledger()
                .ok_or_else(|| Error::InvalidArgument("estimator keeps no ledger".into()))?;
        put(out, into_c_string(ledger.to_json()), "out")
    })
}

/// # Safety
/// `e` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bk_estimator_free(e: *mut BkEstimator) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bk_privacy_bounds(
    r: u32,
    epsilon: f64,
    alpha: f64,
    delta: f64,
    out: *mut BkPrivacyBounds,
) -> BkStatus {
    guard(|| {
        let b = privacy_bounds(r, epsilon, alpha, delta)?;
        put(
            out,
            BkPrivacyBounds {
                pure_epsilon: b.pure.epsilon,
                pure_delta: b.pure.delta,
                approx_epsilon: b.approx.epsilon,
                approx_delta: b.approx.delta,
                q: b.q,
                delta_star: b.delta_star,
            },
            "out",
        )
    })
}
