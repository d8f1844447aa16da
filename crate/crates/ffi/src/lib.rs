//! C ABI over the `adjfas` search.
//!
//! Every fallible call returns an [`AdjfasStatus`]; on failure the message is
//! available from [`adjfas_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their matching `_free` function.
//! Strings returned as `char *` are owned by the caller and released with
//! [`adjfas_string_free`]; `const char *` results are borrowed from a handle.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use adjfas::data::{self, CategoricalTable, ExperimentSummary};
use adjfas::score::{self, EstimateSource, FasConfig, FasResult, Hypothesis};
use adjfas::{Error, ErrorKind};

/// `max_subset_size` value meaning "no cap"; any negative value works.
pub const ADJFAS_NO_SUBSET_LIMIT: i64 = -1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjfasStatus {
    Ok = 0,
    ErrInternal = 1,
    ErrValidation = 2,
    ErrInfeasible = 3,
    ErrEnumeration = 4,
    ErrNullPointer = 5,
    ErrIo = 6,
    ErrPanic = 7,
}

/// Search settings. Start from [`adjfas_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AdjfasConfig {
    pub alpha: f64,
    pub niters: usize,
    pub ess: f64,
    pub seed: u64,
    /// Largest subset size to score, or `ADJFAS_NO_SUBSET_LIMIT`.
    pub max_subset_size: i64,
    pub max_parents: usize,
    pub restarts: usize,
    pub selection_tol: f64,
}

impl From<&AdjfasConfig> for FasConfig {
    fn from(c: &AdjfasConfig) -> Self {
        FasConfig {
            alpha: c.alpha,
            niters: c.niters,
            ess: c.ess,
            seed: c.seed,
            max_subset_size: usize::try_from(c.max_subset_size).ok(),
            max_parents: c.max_parents,
            restarts: c.restarts,
            selection_tol: c.selection_tol,
        }
    }
}

/// Observational table.
pub struct AdjfasTable(CategoricalTable);

/// Experimental summary.
pub struct AdjfasExperiment(ExperimentSummary);

/// Outcome of a search.
pub struct AdjfasResult {
    inner: FasResult,
    set: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<Vec<u8>>) {
    let mut bytes = msg.into();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> AdjfasStatus {
    match err.kind() {
        ErrorKind::Validation => AdjfasStatus::ErrValidation,
        ErrorKind::Infeasible => AdjfasStatus::ErrInfeasible,
        ErrorKind::Enumeration => AdjfasStatus::ErrEnumeration,
        ErrorKind::Io => AdjfasStatus::ErrIo,
        ErrorKind::Other => AdjfasStatus::ErrInternal,
    }
}

struct Failure(AdjfasStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(AdjfasStatus::ErrNullPointer, format!("`{what}` is NULL"))
}

/// Runs `f`, converting errors and panics into a status plus a thread-local
/// message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AdjfasStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            AdjfasStatus::Ok
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
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            AdjfasStatus::ErrPanic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure(
            AdjfasStatus::ErrValidation,
            format!("`{what}` is not valid UTF-8"),
        )
    })
}

unsafe fn out_arg<'a, T>(p: *mut *mut T, what: &str) -> Result<&'a mut *mut T, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    *p = ptr::null_mut();
    Ok(&mut *p)
}

/// Message of the last failed call on this thread, or NULL. Borrowed until
/// the next call on this thread.
#[no_mangle]
pub extern "C" fn adjfas_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn adjfas_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn adjfas_config_default() -> AdjfasConfig {
    let d = FasConfig::default();
    AdjfasConfig {
        alpha: d.alpha,
        niters: d.niters,
        ess: d.ess,
        seed: d.seed,
        max_subset_size: d
            .max_subset_size
            .map_or(ADJFAS_NO_SUBSET_LIMIT, |m| m as i64),
        max_parents: d.max_parents,
        restarts: d.restarts,
        selection_tol: d.selection_tol,
    }
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adjfas_table_load_csv(
    path: *const c_char,
    out: *mut *mut AdjfasTable,
) -> AdjfasStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let t = data::load_observational(path, None)?;
        *out = Box::into_raw(Box::new(AdjfasTable(t)));
        Ok(())
    })
}

/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adjfas_table_parse_csv(
    text: *const c_char,
    out: *mut *mut AdjfasTable,
) -> AdjfasStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(text, "text")?;
        let t = data::parse_observational(text, None)?;
        *out = Box::into_raw(Box::new(AdjfasTable(t)));
        Ok(())
    })
}

/// Number of rows, or 0 for NULL.
///
/// # Safety
/// `table` must be NULL or a live table handle.
#[no_mangle]
pub unsafe extern "C" fn adjfas_table_rows(table: *const AdjfasTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.n_rows())
}

/// Number of columns, or 0 for NULL.
///
/// # Safety
/// `table` must be NULL or a live table handle.
#[no_mangle]
pub unsafe extern "C" fn adjfas_table_columns(table: *const AdjfasTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.n_vars())
}

/// # Safety
/// `table` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn adjfas_table_free(table: *mut AdjfasTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adjfas_experiment_load_json(
    path: *const c_char,
    out: *mut *mut AdjfasExperiment,
) -> AdjfasStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let e = data::load_experiment(path)?;
        *out = Box::into_raw(Box::new(AdjfasExperiment(e)));
        Ok(())
    })
}

/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adjfas_experiment_parse_json(
    text: *const c_char,
    out: *mut *mut AdjfasExperiment,
) -> AdjfasStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(text, "text")?;
        let e = data::parse_experiment(text)?;
        *out = Box::into_raw(Box::new(AdjfasExperiment(e)));
        Ok(())
    })
}

/// # Safety
/// `exp` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn adjfas_experiment_free(exp: *mut AdjfasExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Runs the search, honoring the experiment's population flag. A NULL
/// `config` uses the defaults.
///
/// # Safety
/// `table` and `exp` must be live handles; `config` NULL or valid; `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adjfas_find(
    table: *const AdjfasTable,
    exp: *const AdjfasExperiment,
    config: *const AdjfasConfig,
    out: *mut *mut AdjfasResult,
) -> AdjfasStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let table = table.as_ref().ok_or_else(|| null("table"))?;
        let exp = exp.as_ref().ok_or_else(|| null("exp"))?;
        let cfg = config
            .as_ref()
            .map_or_else(FasConfig::default, FasConfig::from);
        let inner = score::run_fas(&table.0, &exp.0, &cfg)?;
        let set = inner
            .best
            .set()
            .unwrap_or(&[])
            .iter()
            .map(|s| CString::new(s.as_str()).expect("column names have no NUL"))
            .collect();
        *out = Box::into_raw(Box::new(AdjfasResult { inner, set }));
        Ok(())
    })
}

/// # Safety
/// `result` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn adjfas_result_free(result: *mut AdjfasResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// 1 if the best hypothesis is "no adjustment set exists", 0 if it is a set,
/// -1 for NULL.
///
/// # Safety
/// `result` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn adjfas_result_is_not_exists(result: *const AdjfasResult) -> i32 {
    match result.as_ref() {
        None => -1,
        Some(r) => matches!(r.inner.best, Hypothesis::NotExists) as i32,
    }
}

/// Size of the selected set (0 for the empty set, "no set", or NULL).
///
/// # Safety
/// `result` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn adjfas_result_set_len(result: *const AdjfasResult) -> usize {
    result.as_ref().map_or(0, |r| r.set.len())
}

/// Name of the `i`-th member of the selected set, or NULL when out of range.
/// Borrowed from `result`.
///
/// # Safety
/// `result` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn adjfas_result_set_var(
    result: *const AdjfasResult,
    i: usize,
) -> *const c_char {
    result
        .as_ref()
        .and_then(|r| r.set.get(i))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Number of arms with an estimate (0 when none is available).
///
/// # Safety
/// `result` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn adjfas_result_estimate_arms(result: *const AdjfasResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.estimate.arms.len())
}

/// Whether the estimate comes from adjustment (0), the trial arms (1), or is
/// unavailable (2); -1 for NULL.
///
/// # Safety
/// `result` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn adjfas_result_estimate_source(result: *const AdjfasResult) -> i32 {
    match result.as_ref().map(|r| r.inner.estimate.source) {
        None => -1,
        Some(EstimateSource::Adjustment) => 0,
        Some(EstimateSource::Experimental) => 1,
        Some(EstimateSource::NotAvailable) => 2,
    }
}

/// Copies `P(Y | do(X = x))` into `buf`. `*written` receives the number of
/// outcome categories; when `len` is too small nothing is copied and the call
/// fails with a validation status.
///
/// # Safety
/// `result` must be a live handle, `buf` valid for `len` doubles, `written`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adjfas_result_estimate(
    result: *const AdjfasResult,
    x: u32,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> AdjfasStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        if written.is_null() {
            return Err(null("written"));
        }
        *written = 0;
        let arm = r
            .inner
            .estimate
            .arms
            .iter()
            .find(|a| a.x == x)
            .ok_or_else(|| {
                Failure(
                    AdjfasStatus::ErrValidation,
                    format!("no estimate for treatment value {x}"),
                )
            })?;
        *written = arm.probs.len();
        if len < arm.probs.len() {
            return Err(Failure(
                AdjfasStatus::ErrValidation,
                format!("buffer holds {len} values, need {}", arm.probs.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(arm.probs.as_ptr(), buf, arm.probs.len());
        Ok(())
    })
}

/// Full result as JSON. Release with [`adjfas_string_free`].
///
/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adjfas_result_to_json(
    result: *const AdjfasResult,
    out: *mut *mut c_char,
) -> AdjfasStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let json = r.inner.to_json_string()?;
        *out = CString::new(json).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn adjfas_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Log probability of an arm's outcome counts under the "no adjustment set"
/// hypothesis. NaN for a NULL pointer with nonzero `len`.
///
/// # Safety
/// `counts` must be valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn adjfas_score_not_exists(counts: *const u64, len: usize) -> f64 {
    if len == 0 {
        return 0.0;
    }
    if counts.is_null() {
        return f64::NAN;
    }
    let counts = std::slice::from_raw_parts(counts, len).to_vec();
    score::score_not_exists(&data::Arm::new(0, counts))
}
