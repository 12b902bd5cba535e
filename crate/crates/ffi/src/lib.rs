//! C ABI over the `somn` library.
//!
//! Every fallible function returns a [`SomnStatus`] code as `int32_t`; on
//! failure the message is available from [`somn_last_error`] on the same
//! thread. Handles are opaque and must be released with their `_free`
//! function. No function panics across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use somn::eval::{compute_metrics, paired_t_test, wilcoxon_signed_rank, ConfusionMatrix};
use somn::model::ModelBundle;
use somn::pipeline::{score_recording, write_score_csv, PipelineError, ScoredEpoch};
use somn::SleepStage;

#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SomnStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Bad argument value (index out of range, non-UTF-8 path, bad config).
    InvalidArgument = 2,
    /// Unreadable or malformed input data, including bundles and EDF files.
    Data = 3,
    /// A computation failed for a reason other than the input.
    Internal = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

/// Loaded model bundle.
pub struct SomnBundle {
    inner: ModelBundle,
}

/// Per-epoch staging of one recording.
pub struct SomnScore {
    rows: Vec<ScoredEpoch>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SomnMetrics {
    pub accuracy: f64,
    /// Mean F1 over classes with nonzero support.
    pub macro_f1: f64,
    pub kappa: f64,
    pub total: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SomnTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub mean_diff: f64,
    pub n: usize,
}

/// Paired test selector for [`somn_paired_test`].
pub const SOMN_TEST_PAIRED_T: i32 = 0;
pub const SOMN_TEST_WILCOXON: i32 = 1;

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

fn fail(status: SomnStatus, msg: impl Into<String>) -> i32 {
    set_error(msg);
    status as i32
}

fn pipeline_status(e: &PipelineError) -> SomnStatus {
    match e.exit_code() {
        1 => SomnStatus::InvalidArgument,
        2 => SomnStatus::Data,
        _ => SomnStatus::Internal,
    }
}

/// Runs `f` with panics converted to [`SomnStatus::Panic`].
fn guard(f: impl FnOnce() -> i32) -> i32 {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(SomnStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, i32> {
    if p.is_null() {
        return Err(fail(SomnStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(SomnStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn somn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next `somn_*` call on the same thread.
#[no_mangle]
pub extern "C" fn somn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Static name for a stage code (0 W, 1 N1, 2 N2, 3 N3, 4 REM), or null.
#[no_mangle]
pub extern "C" fn somn_stage_name(code: u8) -> *const c_char {
    let name: &'static [u8] = match SleepStage::from_code(code) {
        Some(SleepStage::W) => b"W\0",
        Some(SleepStage::N1) => b"N1\0",
        Some(SleepStage::N2) => b"N2\0",
        Some(SleepStage::N3) => b"N3\0",
        Some(SleepStage::Rem) => b"REM\0",
        _ => return std::ptr::null(),
    };
    name.as_ptr().cast()
}

/// Load a `.somn` bundle. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn somn_bundle_load(path: *const c_char, out: *mut *mut SomnBundle) -> i32 {
    guard(|| {
        if out.is_null() {
            return fail(SomnStatus::NullPointer, "out is null");
        }
        *out = std::ptr::null_mut();
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(code) => return code,
        };
        match ModelBundle::load(&path) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(SomnBundle { inner }));
                SomnStatus::Ok as i32
            }
            Err(e) => {
                let e = PipelineError::model(path.display().to_string(), e);
                fail(pipeline_status(&e), e.to_string())
            }
        }
    })
}

/// Number of feature columns the bundle expects before selection.
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn somn_bundle_n_features(bundle: *const SomnBundle) -> usize {
    bundle
        .as_ref()
        .map_or(0, |b| b.inner.meta.feature_names.len())
}

/// # Safety
/// `bundle` must be null or a handle from [`somn_bundle_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn somn_bundle_free(bundle: *mut SomnBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Stage every 30 s epoch of an EDF recording. `channel` may be null to use
/// the channel stored in the bundle's configuration.
///
/// # Safety
/// `bundle` must be a live handle, `psg_path` (and `channel` if non-null)
/// NUL-terminated strings, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn somn_score_recording(
    bundle: *const SomnBundle,
    psg_path: *const c_char,
    channel: *const c_char,
    out: *mut *mut SomnScore,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return fail(SomnStatus::NullPointer, "out is null");
        }
        *out = std::ptr::null_mut();
        let Some(bundle) = bundle.as_ref() else {
            return fail(SomnStatus::NullPointer, "bundle is null");
        };
        let psg = match path_arg(psg_path, "psg_path") {
            Ok(p) => p,
            Err(code) => return code,
        };
        let channel = if channel.is_null() {
            None
        } else {
            match CStr::from_ptr(channel).to_str() {
                Ok(c) => Some(c),
                Err(_) => return fail(SomnStatus::InvalidArgument, "channel is not UTF-8"),
            }
        };
        match score_recording(&psg, &bundle.inner, channel) {
            Ok(rows) => {
                *out = Box::into_raw(Box::new(SomnScore { rows }));
                SomnStatus::Ok as i32
            }
            Err(e) => fail(pipeline_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `score` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn somn_score_len(score: *const SomnScore) -> usize {
    score.as_ref().map_or(0, |s| s.rows.len())
}

/// Stage code and the five class probabilities (W, N1, N2, N3, REM order)
/// of epoch `index`. `probs` may be null; otherwise it must hold 5 doubles.
///
/// # Safety
/// `score` must be a live handle, `stage` valid, `probs` null or writable
/// for 5 elements.
#[no_mangle]
pub unsafe extern "C" fn somn_score_epoch(
    score: *const SomnScore,
    index: usize,
    stage: *mut u8,
    probs: *mut f64,
) -> i32 {
    guard(|| {
        let Some(score) = score.as_ref() else {
            return fail(SomnStatus::NullPointer, "score is null");
        };
        if stage.is_null() {
            return fail(SomnStatus::NullPointer, "stage is null");
        }
        let Some(row) = score.rows.get(index) else {
            return fail(
                SomnStatus::InvalidArgument,
                format!("epoch {index} out of range (len {})", score.rows.len()),
            );
        };
        *stage = row.stage.code();
        if !probs.is_null() {
            std::slice::from_raw_parts_mut(probs, 5).copy_from_slice(&row.probs);
        }
        SomnStatus::Ok as i32
    })
}

/// Write the staging as CSV (same layout as `somn score`).
///
/// # Safety
/// `score` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn somn_score_write_csv(score: *const SomnScore, path: *const c_char) -> i32 {
    guard(|| {
        let Some(score) = score.as_ref() else {
            return fail(SomnStatus::NullPointer, "score is null");
        };
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(code) => return code,
        };
        let mut buf = Vec::new();
        if let Err(e) = write_score_csv(&mut buf, &score.rows) {
            return fail(SomnStatus::Internal, e.to_string());
        }
        match somn::pipeline::write_atomic(&path, &buf) {
            Ok(()) => SomnStatus::Ok as i32,
            Err(e) => fail(pipeline_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `score` must be null or a handle from [`somn_score_recording`] not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn somn_score_free(score: *mut SomnScore) {
    if !score.is_null() {
        drop(Box::from_raw(score));
    }
}

/// Accuracy, macro-F1 and Cohen's kappa of a `k × k` row-major confusion
/// matrix (rows true, columns predicted).
///
/// # Safety
/// `counts` must point to `k * k` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn somn_metrics(counts: *const u64, k: usize, out: *mut SomnMetrics) -> i32 {
    guard(|| {
        if counts.is_null() || out.is_null() {
            return fail(SomnStatus::NullPointer, "counts or out is null");
        }
        let Some(cells) = k.checked_mul(k).filter(|&n| n > 0) else {
            return fail(SomnStatus::InvalidArgument, format!("invalid k = {k}"));
        };
        let flat = std::slice::from_raw_parts(counts, cells);
        let cm = ConfusionMatrix {
            classes: (0..k).map(|i| i.to_string()).collect(),
            counts: flat.chunks_exact(k).map(|r| r.to_vec()).collect(),
        };
        if cm.total() == 0 {
            return fail(SomnStatus::InvalidArgument, "confusion matrix is empty");
        }
        let m = compute_metrics(&cm);
        *out = SomnMetrics {
            accuracy: m.accuracy,
            macro_f1: m.macro_f1,
            kappa: m.kappa,
            total: cm.total(),
        };
        SomnStatus::Ok as i32
    })
}

/// Two-sided paired test of `a` against `b` (`n` pairs each); `kind` is
/// [`SOMN_TEST_PAIRED_T`] or [`SOMN_TEST_WILCOXON`].
///
/// # Safety
/// `a` and `b` must point to `n` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn somn_paired_test(
    a: *const f64,
    b: *const f64,
    n: usize,
    kind: i32,
    out: *mut SomnTestResult,
) -> i32 {
    guard(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return fail(SomnStatus::NullPointer, "a, b or out is null");
        }
        let (a, b) = (
            std::slice::from_raw_parts(a, n),
            std::slice::from_raw_parts(b, n),
        );
        let r = match kind {
            SOMN_TEST_PAIRED_T => paired_t_test(a, b),
            SOMN_TEST_WILCOXON => wilcoxon_signed_rank(a, b),
            other => {
                return fail(
                    SomnStatus::InvalidArgument,
                    format!("unknown test kind {other}"),
                )
            }
        };
        match r {
            Ok(r) => {
                *out = SomnTestResult {
                    statistic: r.statistic,
                    p_value: r.p_value,
                    mean_diff: r.mean_diff,
                    n: r.n,
                };
                SomnStatus::Ok as i32
            }
            Err(e) => fail(SomnStatus::InvalidArgument, e.to_string()),
        }
    })
}
