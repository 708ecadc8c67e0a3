//! C ABI over the `sparsefeat` solvers, KNN and metrics.
//!
//! Every fallible call returns an [`SfStatus`]; on failure the message is
//! available from [`sf_last_error`] on the same thread. Matrices and
//! solutions are opaque handles that must be released with their `_free`
//! function. Matrix data is row-major `double`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sparsefeat::metrics;
use sparsefeat::neighbors;
use sparsefeat::sparse::{
    self, CoefficientVector, ElasticNetParams, ScaleMode, SolverConfig, StepPolicy,
};
use sparsefeat::tensorio::{self, LabelVector, Matrix};
use sparsefeat::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStatus {
    SfOk = 0,
    /// A required pointer argument was null.
    SfErrNull = 1,
    /// Bad argument value or shape, or a violated precondition.
    SfErrContract = 2,
    /// File could not be opened, read or written.
    SfErrIo = 3,
    /// File contents were malformed.
    SfErrFormat = 4,
    /// A fixed-step proximal-gradient run diverged.
    SfErrDivergence = 5,
    /// An output buffer was too small; nothing was written.
    SfErrBufferTooSmall = 6,
    /// Internal panic caught at the boundary.
    SfErrPanic = 7,
}

/// Opaque row-major matrix.
pub struct SfMatrix(Matrix);

/// Opaque solver result.
pub struct SfSolution(CoefficientVector);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfScaleMode {
    /// `1/(2m)‖y − Xβ‖²`
    SfScaleMean = 0,
    /// `1/2‖y − Xβ‖²`
    SfScaleSum = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStepPolicy {
    SfStepLipschitz = 0,
    /// Uses `step`.
    SfStepFixed = 1,
    /// Starts at `step`, shrinks by `backtrack_beta`.
    SfStepBacktracking = 2,
}

/// Solver settings; start from [`sf_solver_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SfSolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub scale_mode: SfScaleMode,
    pub step_policy: SfStepPolicy,
    pub step: f64,
    pub backtrack_beta: f64,
    /// Nonzero: subtract `mean(y)` and report it as the intercept.
    pub center_targets: i32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SfEvaluation {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let mut msg = msg.into();
    msg.retain(|c| c != '\0');
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> SfStatus {
    match e {
        Error::Stage { source, .. } => status_of(source),
        Error::Io { .. } => SfStatus::SfErrIo,
        Error::Parse { .. } | Error::Format(_) | Error::Truncated { .. } => SfStatus::SfErrFormat,
        Error::Divergence { .. } => SfStatus::SfErrDivergence,
        _ => SfStatus::SfErrContract,
    }
}

struct Fail(SfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(name: &str) -> Fail {
    Fail(SfStatus::SfErrNull, format!("`{name}` is null"))
}

/// Runs `f`, catching panics and recording any failure message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SfStatus::SfOk
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            SfStatus::SfErrPanic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn out_ptr<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn c_path<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SfStatus::SfErrContract, "path is not valid UTF-8".into()))
}

fn copy_out<T: Copy>(src: &[T], dst: *mut T, cap: usize) -> Result<(), Fail> {
    if cap < src.len() {
        return Err(Fail(
            SfStatus::SfErrBufferTooSmall,
            format!("buffer holds {cap}, need {}", src.len()),
        ));
    }
    if !src.is_empty() {
        if dst.is_null() {
            return Err(null("out"));
        }
        // SAFETY: caller guarantees `dst` holds `cap >= src.len()` elements
        unsafe { ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len()) };
    }
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `rows * cols` row-major values into a new matrix.
///
/// # Safety
/// `data` must point to `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut SfMatrix,
) -> SfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Fail(SfStatus::SfErrContract, "rows * cols overflows".into()))?;
        let m = Matrix::new(rows, cols, slice(data, n, "data")?.to_vec())?;
        *out = Box::into_raw(Box::new(SfMatrix(m)));
        Ok(())
    })
}

/// Loads an SPFM or (by `.csv`/`.txt` extension) headerless CSV matrix.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_matrix_load(path: *const c_char, out: *mut *mut SfMatrix) -> SfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let m = tensorio::load_matrix_auto(c_path(path)?)?;
        *out = Box::into_raw(Box::new(SfMatrix(m)));
        Ok(())
    })
}

/// Saves as SPFM with `double` payload.
///
/// # Safety
/// `m` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sf_matrix_save(m: *const SfMatrix, path: *const c_char) -> SfStatus {
    guard(|| {
        let m = handle(m, "m")?;
        tensorio::save_matrix_bin(&m.0, c_path(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn sf_matrix_free(m: *mut SfMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be null or a live handle. Returns 0 for null.
#[no_mangle]
pub unsafe extern "C" fn sf_matrix_rows(m: *const SfMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.n_rows())
}

/// # Safety
/// `m` must be null or a live handle. Returns 0 for null.
#[no_mangle]
pub unsafe extern "C" fn sf_matrix_cols(m: *const SfMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.n_cols())
}

/// Copies the row-major values into `out`, which holds `cap` doubles.
///
/// # Safety
/// `m` must be a live handle; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_matrix_copy(m: *const SfMatrix, out: *mut f64, cap: usize) -> SfStatus {
    guard(|| copy_out(handle(m, "m")?.0.values(), out, cap))
}

#[no_mangle]
pub extern "C" fn sf_solver_config_default() -> SfSolverConfig {
    let d = SolverConfig::default();
    SfSolverConfig {
        tol: d.tol,
        max_iter: d.max_iter,
        scale_mode: SfScaleMode::SfScaleMean,
        step_policy: SfStepPolicy::SfStepLipschitz,
        step: 1.0,
        backtrack_beta: 0.5,
        center_targets: 0,
    }
}

fn solver_config(c: Option<&SfSolverConfig>) -> SolverConfig {
    let c = c.copied().unwrap_or_else(|| sf_solver_config_default());
    SolverConfig::default()
        .with_tol(c.tol)
        .with_max_iter(c.max_iter)
        .with_scale(match c.scale_mode {
            SfScaleMode::SfScaleMean => ScaleMode::Mean,
            SfScaleMode::SfScaleSum => ScaleMode::Sum,
        })
        .with_step(match c.step_policy {
            SfStepPolicy::SfStepLipschitz => StepPolicy::Lipschitz,
            SfStepPolicy::SfStepFixed => StepPolicy::Fixed { t: c.step },
            SfStepPolicy::SfStepBacktracking => StepPolicy::Backtracking {
                beta: c.backtrack_beta,
                t0: c.step,
            },
        })
        .centered(c.center_targets != 0)
}

unsafe fn solve(
    x: *const SfMatrix,
    y: *const f64,
    y_len: usize,
    cfg: *const SfSolverConfig,
    out: *mut *mut SfSolution,
    f: impl FnOnce(&Matrix, &[f64], &SolverConfig) -> sparsefeat::Result<CoefficientVector>,
) -> SfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let x = handle(x, "x")?;
        let y = slice(y, y_len, "y")?;
        let c = f(&x.0, y, &solver_config(cfg.as_ref()))?;
        *out = Box::into_raw(Box::new(SfSolution(c)));
        Ok(())
    })
}

/// Lasso by coordinate descent. `cfg` may be null for defaults.
///
/// # Safety
/// `x` must be a live handle, `y` must hold `y_len` doubles, `cfg` must be
/// null or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_lasso_cd(
    x: *const SfMatrix,
    y: *const f64,
    y_len: usize,
    lambda: f64,
    cfg: *const SfSolverConfig,
    out: *mut *mut SfSolution,
) -> SfStatus {
    solve(x, y, y_len, cfg, out, |x, y, c| {
        sparse::lasso_cd(x, y, lambda, c)
    })
}

/// Elastic Net by coordinate descent.
///
/// # Safety
/// As for [`sf_lasso_cd`].
#[no_mangle]
pub unsafe extern "C" fn sf_elastic_net_cd(
    x: *const SfMatrix,
    y: *const f64,
    y_len: usize,
    alpha: f64,
    l1_ratio: f64,
    cfg: *const SfSolverConfig,
    out: *mut *mut SfSolution,
) -> SfStatus {
    solve(x, y, y_len, cfg, out, |x, y, c| {
        sparse::elastic_net_cd(x, y, &ElasticNetParams::new(alpha, l1_ratio)?, c)
    })
}

/// Lasso by ISTA.
///
/// # Safety
/// As for [`sf_lasso_cd`].
#[no_mangle]
pub unsafe extern "C" fn sf_ista(
    x: *const SfMatrix,
    y: *const f64,
    y_len: usize,
    lambda: f64,
    cfg: *const SfSolverConfig,
    out: *mut *mut SfSolution,
) -> SfStatus {
    solve(x, y, y_len, cfg, out, |x, y, c| {
        sparse::ista(x, y, lambda, c)
    })
}

/// Lasso by FISTA.
///
/// # Safety
/// As for [`sf_lasso_cd`].
#[no_mangle]
pub unsafe extern "C" fn sf_fista(
    x: *const SfMatrix,
    y: *const f64,
    y_len: usize,
    lambda: f64,
    cfg: *const SfSolverConfig,
    out: *mut *mut SfSolution,
) -> SfStatus {
    solve(x, y, y_len, cfg, out, |x, y, c| {
        sparse::fista(x, y, lambda, c)
    })
}

/// # Safety
/// `s` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn sf_solution_free(s: *mut SfSolution) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of coefficients; 0 for null.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_solution_len(s: *const SfSolution) -> usize {
    s.as_ref().map_or(0, |s| s.0.coef.len())
}

/// # Safety
/// `s` must be a live handle; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_solution_coef(
    s: *const SfSolution,
    out: *mut f64,
    cap: usize,
) -> SfStatus {
    guard(|| copy_out(&handle(s, "s")?.0.coef, out, cap))
}

/// Intercept (0 unless targets were centered); NaN for null.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_solution_intercept(s: *const SfSolution) -> f64 {
    s.as_ref().map_or(f64::NAN, |s| s.0.intercept)
}

/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_solution_iterations(s: *const SfSolution) -> usize {
    s.as_ref().map_or(0, |s| s.0.iterations)
}

/// 1 if the solver met its tolerance, 0 otherwise (or for null).
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_solution_converged(s: *const SfSolution) -> i32 {
    s.as_ref().map_or(0, |s| s.0.converged as i32)
}

/// Objective after the last iteration; NaN for null.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_solution_objective(s: *const SfSolution) -> f64 {
    s.as_ref().map_or(f64::NAN, |s| s.0.final_objective())
}

/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_solution_history_len(s: *const SfSolution) -> usize {
    s.as_ref().map_or(0, |s| s.0.objective_history.len())
}

/// Objective per iteration, starting with the value at zero.
///
/// # Safety
/// `s` must be a live handle; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_solution_history(
    s: *const SfSolution,
    out: *mut f64,
    cap: usize,
) -> SfStatus {
    guard(|| copy_out(&handle(s, "s")?.0.objective_history, out, cap))
}

/// Writes the ascending indices with `|coef| > zero_tol` into `out` and
/// their count into `count`. If `cap` is too small only `count` is set and
/// `SfErrBufferTooSmall` is returned.
///
/// # Safety
/// `s` must be a live handle; `out` must hold `cap` elements; `count`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_solution_support(
    s: *const SfSolution,
    zero_tol: f64,
    out: *mut usize,
    cap: usize,
    count: *mut usize,
) -> SfStatus {
    guard(|| {
        let count = out_ptr(count, "count")?;
        let mask = handle(s, "s")?.0.support(zero_tol);
        *count = mask.len();
        copy_out(mask.selected(), out, cap)
    })
}

/// Majority-vote KNN. Writes one label per query row into `out`.
///
/// # Safety
/// `train` and `query` must be live handles; `labels` must hold
/// `sf_matrix_rows(train)` elements and `out` `cap` elements.
#[no_mangle]
pub unsafe extern "C" fn sf_knn_predict(
    train: *const SfMatrix,
    labels: *const usize,
    k: usize,
    query: *const SfMatrix,
    out: *mut usize,
    cap: usize,
) -> SfStatus {
    guard(|| {
        let train = &handle(train, "train")?.0;
        let query = &handle(query, "query")?.0;
        let labels = LabelVector::new(slice(labels, train.n_rows(), "labels")?.to_vec());
        let model = neighbors::knn_fit(train, &labels, k)?;
        copy_out(neighbors::knn_predict(&model, query)?.as_slice(), out, cap)
    })
}

/// Binary metrics with positive class 1.
///
/// # Safety
/// `truth` and `pred` must hold `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_evaluate(
    truth: *const usize,
    pred: *const usize,
    n: usize,
    out: *mut SfEvaluation,
) -> SfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let t = LabelVector::new(slice(truth, n, "truth")?.to_vec());
        let p = LabelVector::new(slice(pred, n, "pred")?.to_vec());
        let e = metrics::evaluate(&t, &p)?;
        *out = SfEvaluation {
            tp: e.confusion.tp,
            fp: e.confusion.fp,
            fn_: e.confusion.fn_,
            tn: e.confusion.tn,
            accuracy: e.accuracy,
            precision: e.precision,
            recall: e.recall,
            f1: e.f1,
        };
        Ok(())
    })
}
