//! C ABI over `coarse-lab`: build metric spaces, run scenarios, read
//! certificates. Handles are opaque; every fallible call returns a
//! [`CoarseLabStatus`] and leaves a message for [`coarse_lab_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use coarse_lab::certificate::Certificate;
use coarse_lab::scenario::{exit_code, run_scenario, run_scenario_str, SpaceSpec};
use coarse_lab::space::FiniteMetricSpace;
use coarse_lab::Error;

/// Status codes. `CheckFailed` and `InvalidInput` mirror CLI exit codes 1 and 2.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoarseLabStatus {
    Ok = 0,
    /// A certificate was produced but some checked inequality fails.
    CheckFailed = 1,
    /// Parse error, violated precondition or invalid object.
    InvalidInput = 2,
    NullPointer = 3,
    InvalidUtf8 = 4,
    Io = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// Opaque finite metric space.
pub struct CoarseLabSpace {
    inner: FiniteMetricSpace,
}

/// Opaque certificate.
pub struct CoarseLabCertificate {
    inner: Certificate,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> CoarseLabStatus {
    match e {
        Error::Io(_) => CoarseLabStatus::Io,
        _ => CoarseLabStatus::InvalidInput,
    }
}

fn fail(e: Error) -> CoarseLabStatus {
    let status = status_of(&e);
    set_error(e.to_string());
    status
}

/// Runs `f`, turning a panic into [`CoarseLabStatus::Panic`].
fn guard(f: impl FnOnce() -> CoarseLabStatus) -> CoarseLabStatus {
    clear_error();
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| {
        set_error("internal panic");
        CoarseLabStatus::Panic
    })
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, CoarseLabStatus> {
    if s.is_null() {
        set_error("null string argument");
        return Err(CoarseLabStatus::NullPointer);
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        CoarseLabStatus::InvalidUtf8
    })
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

fn certificate_status(cert: &Certificate) -> CoarseLabStatus {
    match exit_code(&Ok(cert.clone())) {
        0 => CoarseLabStatus::Ok,
        _ => CoarseLabStatus::CheckFailed,
    }
}

/// Copy of the last error message on this thread, or NULL if the last call
/// succeeded. Free with [`coarse_lab_string_free`].
#[no_mangle]
pub extern "C" fn coarse_lab_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |m| m.clone().into_raw()))
}

/// # Safety
/// `s` must come from this library and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn coarse_lab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// spaces

/// Parses a space description (the JSON accepted by `check-space`).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn coarse_lab_space_from_json(json: *const c_char, out: *mut *mut CoarseLabSpace) -> CoarseLabStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return CoarseLabStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let built = serde_json::from_str::<SpaceSpec>(text).map_err(Error::from).and_then(|spec| spec.build());
        match built {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(CoarseLabSpace { inner }));
                CoarseLabStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of points, 0 for NULL.
///
/// # Safety
/// `space` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn coarse_lab_space_len(space: *const CoarseLabSpace) -> usize {
    space.as_ref().map_or(0, |s| s.inner.len())
}

/// # Safety
/// `space` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn coarse_lab_space_distance(
    space: *const CoarseLabSpace,
    x: usize,
    y: usize,
    out: *mut f64,
) -> CoarseLabStatus {
    guard(|| {
        let Some(s) = space.as_ref() else {
            set_error("null space handle");
            return CoarseLabStatus::NullPointer;
        };
        if out.is_null() {
            set_error("null output pointer");
            return CoarseLabStatus::NullPointer;
        }
        let n = s.inner.len();
        if x >= n || y >= n {
            set_error(format!("point index out of range for a space of {n} points"));
            return CoarseLabStatus::OutOfRange;
        }
        *out = s.inner.dist(x, y);
        CoarseLabStatus::Ok
    })
}

/// # Safety
/// `space` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn coarse_lab_space_diameter(space: *const CoarseLabSpace, out: *mut f64) -> CoarseLabStatus {
    guard(|| match (space.as_ref(), out.is_null()) {
        (Some(s), false) => {
            *out = s.inner.diameter();
            CoarseLabStatus::Ok
        }
        _ => {
            set_error("null argument");
            CoarseLabStatus::NullPointer
        }
    })
}

/// # Safety
/// `space` must come from [`coarse_lab_space_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn coarse_lab_space_free(space: *mut CoarseLabSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

// ---------------------------------------------------------------------------
// scenarios and certificates

unsafe fn finish(result: coarse_lab::Result<Certificate>, out: *mut *mut CoarseLabCertificate) -> CoarseLabStatus {
    match result {
        Ok(inner) => {
            let status = certificate_status(&inner);
            if status != CoarseLabStatus::Ok {
                set_error(format!("{} checked inequalities fail", inner.failures().count()));
            }
            *out = Box::into_raw(Box::new(CoarseLabCertificate { inner }));
            status
        }
        Err(e) => fail(e),
    }
}

/// Runs a scenario file. On `Ok` and `CheckFailed` a certificate is stored
/// in `*out`; otherwise `*out` is NULL.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn coarse_lab_run_scenario_file(
    path: *const c_char,
    out: *mut *mut CoarseLabCertificate,
) -> CoarseLabStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return CoarseLabStatus::NullPointer;
        }
        *out = ptr::null_mut();
        match read_str(path) {
            Ok(p) => finish(run_scenario(Path::new(p)), out),
            Err(s) => s,
        }
    })
}

/// Runs scenario JSON given inline; relative input paths resolve against
/// `base_dir` (NULL means the current directory).
///
/// # Safety
/// `json` and a non-NULL `base_dir` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn coarse_lab_run_scenario_json(
    json: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut CoarseLabCertificate,
) -> CoarseLabStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return CoarseLabStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let base = if base_dir.is_null() {
            "."
        } else {
            match read_str(base_dir) {
                Ok(b) => b,
                Err(s) => return s,
            }
        };
        finish(run_scenario_str(text, Path::new(base)), out)
    })
}

/// # Safety
/// `cert` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn coarse_lab_certificate_pass(cert: *const CoarseLabCertificate) -> bool {
    cert.as_ref().is_some_and(|c| c.inner.pass)
}

/// Number of checked inequalities.
///
/// # Safety
/// `cert` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn coarse_lab_certificate_check_count(cert: *const CoarseLabCertificate) -> usize {
    cert.as_ref().map_or(0, |c| c.inner.checked_inequalities.len())
}

/// Both sides of check `index`.
///
/// # Safety
/// `cert` must be a live handle; `lhs`, `rhs` and `pass` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn coarse_lab_certificate_check(
    cert: *const CoarseLabCertificate,
    index: usize,
    lhs: *mut f64,
    rhs: *mut f64,
    pass: *mut bool,
) -> CoarseLabStatus {
    guard(|| {
        let Some(c) = cert.as_ref() else {
            set_error("null certificate handle");
            return CoarseLabStatus::NullPointer;
        };
        if lhs.is_null() || rhs.is_null() || pass.is_null() {
            set_error("null output pointer");
            return CoarseLabStatus::NullPointer;
        }
        let Some(check) = c.inner.checked_inequalities.get(index) else {
            set_error(format!("check index {index} out of range"));
            return CoarseLabStatus::OutOfRange;
        };
        *lhs = check.lhs;
        *rhs = check.rhs;
        *pass = check.pass;
        CoarseLabStatus::Ok
    })
}

/// The certificate as JSON (the CLI's byte format). Free with [`coarse_lab_string_free`].
///
/// # Safety
/// `cert` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn coarse_lab_certificate_json(cert: *const CoarseLabCertificate) -> *mut c_char {
    cert.as_ref().map_or(ptr::null_mut(), |c| into_c_string(c.inner.to_json()))
}

/// # Safety
/// `cert` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn coarse_lab_certificate_free(cert: *mut CoarseLabCertificate) {
    if !cert.is_null() {
        drop(Box::from_raw(cert));
    }
}

/// Library version, static storage; do not free.
#[no_mangle]
pub extern "C" fn coarse_lab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
