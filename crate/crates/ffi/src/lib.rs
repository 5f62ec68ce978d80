//! C ABI over `udalab-core`.
//!
//! Every fallible call returns a [`UdalabStatus`]; on failure the message is
//! available from [`udalab_last_error_message`] on the same thread. Objects
//! are opaque handles released with their matching `_free` function, and
//! strings returned through out-pointers are released with
//! [`udalab_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use udalab_core::cli::load_corpus;
use udalab_core::clustering::{dbscan, ClusteringConfig, Metric};
use udalab_core::config::RunConfig;
use udalab_core::diagnostics::average_precision;
use udalab_core::trainer::{run, TrainingReport};
use udalab_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UdalabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Runtime = 4,
    Panic = 5,
}

/// Parsed run configuration (corpus plus experiment).
pub struct UdalabConfig {
    inner: RunConfig,
}

/// Result of a completed training run.
pub struct UdalabReport {
    inner: TrainingReport,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UdalabMetrics {
    pub map: f64,
    pub rank1: f64,
    pub rank5: f64,
    pub rank10: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(UdalabStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = if e.is_config() { UdalabStatus::Config } else { UdalabStatus::Runtime };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(UdalabStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> UdalabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            UdalabStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {msg}"));
            UdalabStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(UdalabStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|e| Failure(UdalabStatus::Runtime, format!("string contains NUL: {e}")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn udalab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn udalab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Configuration with every value at its default.
#[no_mangle]
pub extern "C" fn udalab_config_new() -> *mut UdalabConfig {
    Box::into_raw(Box::new(UdalabConfig { inner: RunConfig::default() }))
}

/// Parses flat `key=value` text into a new configuration.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn udalab_config_parse(text: *const c_char, out: *mut *mut UdalabConfig) -> UdalabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = RunConfig::from_text(read_str(text, "text")?)?;
        *out = Box::into_raw(Box::new(UdalabConfig { inner: cfg }));
        Ok(())
    })
}

/// Sets one key, with the same syntax as a config file line.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn udalab_config_set(
    cfg: *mut UdalabConfig,
    key: *const c_char,
    value: *const c_char,
) -> UdalabStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        let key = read_str(key, "key")?;
        let value = read_str(value, "value")?;
        cfg.inner.set(key, value)?;
        Ok(())
    })
}

/// Serializes the configuration; free the result with `udalab_string_free`.
///
/// # Safety
/// `cfg` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn udalab_config_to_text(cfg: *const UdalabConfig, out: *mut *mut c_char) -> UdalabStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = to_c_string(cfg.inner.to_text())?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn udalab_config_free(cfg: *mut UdalabConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Builds the corpus described by `cfg` and trains on it.
///
/// # Safety
/// `cfg` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn udalab_run(cfg: *const UdalabConfig, out: *mut *mut UdalabReport) -> UdalabStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        cfg.inner.validate()?;
        let (source, target, _) = load_corpus(&cfg.inner)?;
        let report = run(&source, &target, &cfg.inner.experiment)?;
        *out = Box::into_raw(Box::new(UdalabReport { inner: report }));
        Ok(())
    })
}

/// # Safety
/// `report` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn udalab_report_metrics(report: *const UdalabReport, out: *mut UdalabMetrics) -> UdalabStatus {
    guard(|| {
        let report = report.as_ref().ok_or_else(|| null("report"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let m = report.inner.final_metrics;
        *out = UdalabMetrics { map: m.map, rank1: m.rank1, rank5: m.rank5, rank10: m.rank10 };
        Ok(())
    })
}

/// Final clustering error rate of the report, NaN when the final clustering
/// found no cluster.
///
/// # Safety
/// `report` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn udalab_report_clustering_error(report: *const UdalabReport, out: *mut f64) -> UdalabStatus {
    guard(|| {
        let report = report.as_ref().ok_or_else(|| null("report"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = report.inner.final_clustering.clustering_error_rate.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// The report as JSON; free the result with `udalab_string_free`.
///
/// # Safety
/// `report` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn udalab_report_json(report: *const UdalabReport, out: *mut *mut c_char) -> UdalabStatus {
    guard(|| {
        let report = report.as_ref().ok_or_else(|| null("report"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = to_c_string(report.inner.to_json()?)?;
        Ok(())
    })
}

/// # Safety
/// `report` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn udalab_report_free(report: *mut UdalabReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must be a string returned by this library or NULL.
#[no_mangle]
pub unsafe extern "C" fn udalab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Average precision of one ranked list; nonzero bytes mark relevant items.
///
/// # Safety
/// `relevance` must point to `len` bytes (may be NULL when `len` is 0).
#[no_mangle]
pub unsafe extern "C" fn udalab_average_precision(relevance: *const u8, len: usize, out: *mut f64) -> UdalabStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let flags: Vec<bool> = if len == 0 {
            Vec::new()
        } else if relevance.is_null() {
            return Err(null("relevance"));
        } else {
            std::slice::from_raw_parts(relevance, len).iter().map(|&b| b != 0).collect()
        };
        *out = average_precision(&flags);
        Ok(())
    })
}

/// DBSCAN over a row-major `n`×`n` distance matrix. Writes one label per
/// point into `labels` (-1 for outliers) and the cluster count.
///
/// # Safety
/// `distances` must hold `n*n` values and `labels` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn udalab_dbscan(
    distances: *const f64,
    n: usize,
    eps: f64,
    min_pts: usize,
    labels: *mut i64,
    num_clusters: *mut usize,
) -> UdalabStatus {
    guard(|| {
        if n > 0 && (distances.is_null() || labels.is_null()) {
            return Err(null("distances/labels"));
        }
        let num_clusters = num_clusters.as_mut().ok_or_else(|| null("num_clusters"))?;
        let cfg = ClusteringConfig { eps, min_pts, metric: Metric::Euclidean };
        let view = if n == 0 {
            ndarray::ArrayView2::from_shape((0, 0), &[][..])
        } else {
            let len = n.checked_mul(n).ok_or_else(|| Failure(UdalabStatus::Config, "n*n overflows".into()))?;
            ndarray::ArrayView2::from_shape((n, n), std::slice::from_raw_parts(distances, len))
        }
        .map_err(|e| Failure(UdalabStatus::Runtime, e.to_string()))?;
        let result = dbscan(view, &cfg)?;
        if n > 0 {
            let out = std::slice::from_raw_parts_mut(labels, n);
            for (slot, l) in out.iter_mut().zip(&result.labels) {
                *slot = l.map_or(-1, |c| c as i64);
            }
        }
        *num_clusters = result.num_clusters;
        Ok(())
    })
}
