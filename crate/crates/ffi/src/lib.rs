//! C ABI over the detector.
//!
//! An [`AcdEngine`] is opened from an artifact directory written by the
//! `acd` command line tool (`train` and `cluster` stages) and then scores
//! sentences. Every fallible call returns an [`AcdStatus`]; on failure the
//! message is available from [`acd_last_error`] on the same thread.
//!
//! Strings returned to the caller are owned by the caller and released with
//! [`acd_string_free`]. Strings passed in must be NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use acd_core::pipeline::{LoadedModel, PipelineConfig};
use acd_core::Error;

/// Result of a C API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    Validation = 6,
    Config = 7,
    Training = 8,
    MissingArtifact = 9,
    StaleArtifact = 10,
    Panic = 11,
}

impl From<&Error> for AcdStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => AcdStatus::Io,
            Error::Parse { .. } => AcdStatus::Parse,
            Error::Validation(_) => AcdStatus::Validation,
            Error::Config(_) => AcdStatus::Config,
            Error::Training(_) => AcdStatus::Training,
            Error::MissingArtifact { .. } => AcdStatus::MissingArtifact,
            Error::StaleArtifact { .. } => AcdStatus::StaleArtifact,
        }
    }
}

/// Opaque handle to a loaded model.
pub struct AcdEngine {
    model: LoadedModel,
    category_names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("NUL bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(AcdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(AcdStatus::from(&e), e.to_string())
    }
}

/// Runs `f`, translating errors and panics into a status and last-error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AcdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AcdStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AcdStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(AcdStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(AcdStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

fn check_alpha(alpha: f64) -> Result<(), Failure> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Failure(
            AcdStatus::InvalidArgument,
            format!("alpha {alpha} outside [0, 1]"),
        ))
    }
}

/// Opens the artifacts in `artifact_dir`. `lexicon_path` and
/// `stopwords_path` may be null to use the bundled restaurant lexicon and
/// English stopword list; they must match what the artifacts were built
/// with. On success `*out` receives a handle to free with
/// [`acd_engine_free`].
///
/// # Safety
/// String arguments are null or NUL-terminated; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn acd_engine_open(
    artifact_dir: *const c_char,
    lexicon_path: *const c_char,
    stopwords_path: *const c_char,
    out: *mut *mut AcdEngine,
) -> AcdStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(AcdStatus::NullPointer, "`out` is null".into()));
        }
        *out = ptr::null_mut();
        let config = PipelineConfig {
            artifacts: PathBuf::from(str_arg(artifact_dir, "artifact_dir")?),
            lexicon: opt_str_arg(lexicon_path, "lexicon_path")?.map(PathBuf::from),
            stopwords: opt_str_arg(stopwords_path, "stopwords_path")?.map(PathBuf::from),
            ..PipelineConfig::default()
        };
        let model = LoadedModel::load_unchecked(&config)?;
        let category_names = model
            .lexicon
            .category_names()
            .into_iter()
            .map(|n| CString::new(n).expect("category names contain no NUL"))
            .collect();
        *out = Box::into_raw(Box::new(AcdEngine { model, category_names }));
        Ok(())
    })
}

/// Releases an engine. Null is ignored.
///
/// # Safety
/// `engine` is null or a handle from [`acd_engine_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn acd_engine_free(engine: *mut AcdEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Number of scored categories (the fallback category is not scored).
///
/// # Safety
/// `engine` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn acd_engine_category_count(engine: *const AcdEngine) -> usize {
    engine.as_ref().map_or(0, |e| e.category_names.len())
}

/// Name of category `index`, or null when out of range. The string is
/// borrowed from the engine.
///
/// # Safety
/// `engine` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn acd_engine_category_name(engine: *const AcdEngine, index: usize) -> *const c_char {
    engine
        .as_ref()
        .and_then(|e| e.category_names.get(index))
        .map_or(ptr::null(), |n| n.as_ptr())
}

/// Writes the final interpolated score of every category, in category
/// order, to `out`, which holds `out_len` doubles.
///
/// # Safety
/// `engine` is a live handle, `text` is NUL-terminated, and `out` points to
/// `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn acd_engine_scores(
    engine: *const AcdEngine,
    text: *const c_char,
    alpha: f64,
    out: *mut f64,
    out_len: usize,
) -> AcdStatus {
    guard(|| {
        let engine = engine
            .as_ref()
            .ok_or_else(|| Failure(AcdStatus::NullPointer, "`engine` is null".into()))?;
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(Failure(AcdStatus::NullPointer, "`out` is null".into()));
        }
        check_alpha(alpha)?;
        let n = engine.category_names.len();
        if out_len < n {
            return Err(Failure(
                AcdStatus::InvalidArgument,
                format!("output holds {out_len} values, {n} needed"),
            ));
        }
        let sentence = engine.model.preprocessor.sentence("", text);
        let scores = engine.model.detector(alpha).score(&sentence);
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(scores.values());
        Ok(())
    })
}

/// Detects the categories of `text` and returns the detection as a JSON
/// object `{"id", "scores", "assigned"}` in `*out_json`, to be released
/// with [`acd_string_free`].
///
/// # Safety
/// `engine` is a live handle, `id` and `text` are NUL-terminated, and
/// `out_json` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn acd_engine_detect_json(
    engine: *const AcdEngine,
    id: *const c_char,
    text: *const c_char,
    alpha: f64,
    threshold: f64,
    out_json: *mut *mut c_char,
) -> AcdStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(Failure(AcdStatus::NullPointer, "`out_json` is null".into()));
        }
        *out_json = ptr::null_mut();
        let engine = engine
            .as_ref()
            .ok_or_else(|| Failure(AcdStatus::NullPointer, "`engine` is null".into()))?;
        let id = str_arg(id, "id")?;
        let text = str_arg(text, "text")?;
        check_alpha(alpha)?;
        if !threshold.is_finite() {
            return Err(Failure(AcdStatus::InvalidArgument, "threshold must be finite".into()));
        }
        let detection = engine.model.detect_text(id, text, alpha, threshold);
        let json = serde_json::to_string(&detection).expect("detection serializes");
        *out_json = CString::new(json).expect("JSON escapes NUL").into_raw();
        Ok(())
    })
}

/// Logistic calibration of a raw similarity.
#[no_mangle]
pub extern "C" fn acd_calibrate(similarity: f64) -> f64 {
    acd_core::similarity::calibrate(similarity)
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn acd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn acd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_arguments_are_reported() {
        let mut engine = ptr::null_mut();
        let status = unsafe { acd_engine_open(ptr::null(), ptr::null(), ptr::null(), &mut engine) };
        assert_eq!(status, AcdStatus::NullPointer);
        assert!(engine.is_null());
        let msg = unsafe { CStr::from_ptr(acd_last_error()) }.to_str().unwrap();
        assert!(msg.contains("artifact_dir"));
        unsafe { acd_engine_free(ptr::null_mut()) };
        unsafe { acd_string_free(ptr::null_mut()) };
        assert_eq!(unsafe { acd_engine_category_count(ptr::null()) }, 0);
    }

    #[test]
    fn missing_artifacts_map_to_io_status() {
        let dir = CString::new("/nonexistent/acd-artifacts").unwrap();
        let mut engine = ptr::null_mut();
        let status = unsafe { acd_engine_open(dir.as_ptr(), ptr::null(), ptr::null(), &mut engine) };
        assert_eq!(status, AcdStatus::Io);
        assert!(engine.is_null());
    }

    #[test]
    fn calibrate_is_exported() {
        assert_eq!(acd_calibrate(0.0), 0.5);
    }
}
