//! C ABI for `nncert`.
//!
//! Objects are opaque handles created by `*_from_json`, `nncert_learn` or
//! `nncert_verify` and released with the matching `*_free`. Every fallible
//! call returns an [`NncertStatus`]; on failure a message is available from
//! [`nncert_last_error`] on the same thread. Strings handed out by the
//! library are freed with [`nncert_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nncert::pipeline::{learn, monte_carlo, verify, Outcome, ProblemSpec, RunReport};
use nncert::{Error, Network};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NncertStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Dimension = 4,
    InvalidArgument = 5,
    /// Singular or asymmetric matrix, or a violated numerical precondition.
    Numeric = 6,
    Unsupported = 7,
    SoundnessBug = 8,
    Io = 9,
    Panic = 10,
}

/// Outcome of a learning or verification run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NncertOutcome {
    Feasible = 0,
    BudgetExhausted = 1,
    Certified = 2,
    Unknown = 3,
}

impl From<Outcome> for NncertOutcome {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Feasible => NncertOutcome::Feasible,
            Outcome::BudgetExhausted => NncertOutcome::BudgetExhausted,
            Outcome::Certified => NncertOutcome::Certified,
            Outcome::Unknown => NncertOutcome::Unknown,
        }
    }
}

/// A validated problem file.
pub struct NncertProblem(ProblemSpec);

/// A feed-forward network.
pub struct NncertNetwork(Network);

/// The report of a learning or verification run.
pub struct NncertReport(RunReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> NncertStatus {
    match e {
        Error::Dimension(_) => NncertStatus::Dimension,
        Error::InvalidArgument(_) => NncertStatus::InvalidArgument,
        Error::NotSymmetric(_) | Error::Singular(_) | Error::Precondition(_) => NncertStatus::Numeric,
        Error::Unsupported(_) => NncertStatus::Unsupported,
        Error::Parse(_) | Error::Json(_) => NncertStatus::Parse,
        Error::SoundnessBug(_) => NncertStatus::SoundnessBug,
        Error::Io(_) => NncertStatus::Io,
        Error::Stage { source, .. } => status_of(source),
    }
}

fn fail(status: NncertStatus, msg: impl Into<String>) -> NncertStatus {
    set_error(msg.into());
    status
}

/// Run `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), NncertStatus>) -> NncertStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NncertStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(NncertStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: nncert::Result<T>) -> Result<T, NncertStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, NncertStatus> {
    if p.is_null() {
        return Err(fail(NncertStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(NncertStatus::InvalidUtf8, "string argument is not UTF-8"))
}

unsafe fn obj<'a, T>(p: *const T) -> Result<&'a T, NncertStatus> {
    p.as_ref().ok_or_else(|| fail(NncertStatus::NullPointer, "null handle"))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), NncertStatus> {
    if out.is_null() {
        return Err(fail(NncertStatus::NullPointer, "null output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), NncertStatus> {
    if out.is_null() {
        return Err(fail(NncertStatus::NullPointer, "null output pointer"));
    }
    *out = CString::new(s)
        .map_err(|_| fail(NncertStatus::Parse, "string contains nul"))?
        .into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nncert_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn nncert_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse and validate a problem JSON document.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nncert_problem_from_json(json: *const c_char, out: *mut *mut NncertProblem) -> NncertStatus {
    guard(|| {
        let spec = lift(ProblemSpec::from_json(str_arg(json)?))?;
        put(out, NncertProblem(spec))
    })
}

/// Number of specification pairs.
///
/// # Safety
/// `problem` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nncert_problem_pair_count(problem: *const NncertProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.0.pairs.len())
}

/// # Safety
/// `problem` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn nncert_problem_free(problem: *mut NncertProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Parse a weights JSON document.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nncert_network_from_json(json: *const c_char, out: *mut *mut NncertNetwork) -> NncertStatus {
    guard(|| {
        let net = lift(Network::from_json(str_arg(json)?))?;
        put(out, NncertNetwork(net))
    })
}

/// Serialize a network; free the result with [`nncert_string_free`].
///
/// # Safety
/// `net` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nncert_network_to_json(net: *const NncertNetwork, out: *mut *mut c_char) -> NncertStatus {
    guard(|| put_string(out, obj(net)?.0.to_json()))
}

/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nncert_network_input_dim(net: *const NncertNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.input_dim())
}

/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nncert_network_output_dim(net: *const NncertNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.output_dim())
}

/// Evaluate the network at `x` (length `x_len`) into `y` (length `y_len`).
///
/// # Safety
/// `x` and `y` must point to arrays of the given lengths.
#[no_mangle]
pub unsafe extern "C" fn nncert_network_forward(
    net: *const NncertNetwork,
    x: *const f64,
    x_len: usize,
    y: *mut f64,
    y_len: usize,
) -> NncertStatus {
    guard(|| {
        let net = &obj(net)?.0;
        if x.is_null() || y.is_null() {
            return Err(fail(NncertStatus::NullPointer, "null array"));
        }
        if y_len != net.output_dim() {
            return Err(fail(
                NncertStatus::Dimension,
                format!(
                    "output buffer has length {y_len}, network has {} outputs",
                    net.output_dim()
                ),
            ));
        }
        let input = nncert::nalgebra::DVector::from_column_slice(std::slice::from_raw_parts(x, x_len));
        let out = lift(net.forward(&input))?;
        std::slice::from_raw_parts_mut(y, y_len).copy_from_slice(out.as_slice());
        Ok(())
    })
}

/// # Safety
/// `net` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn nncert_network_free(net: *mut NncertNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Learn a certified network for `problem`. A report is produced for both
/// feasible and budget-exhausted runs.
///
/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nncert_learn(problem: *const NncertProblem, out: *mut *mut NncertReport) -> NncertStatus {
    guard(|| {
        let report = lift(learn(&obj(problem)?.0))?;
        put(out, NncertReport(report))
    })
}

/// Verify `net` against the pairs of `problem` using its solver settings,
/// sample count and seed.
///
/// # Safety
/// Handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nncert_verify(
    net: *const NncertNetwork,
    problem: *const NncertProblem,
    out: *mut *mut NncertReport,
) -> NncertStatus {
    guard(|| {
        let spec = &obj(problem)?.0;
        let opts = nncert::SolveOptions {
            seed: spec.seed,
            ..spec.solver.clone()
        };
        let report = lift(verify(&obj(net)?.0, &spec.pairs, &opts, spec.mc_samples, spec.seed))?;
        put(out, NncertReport(report))
    })
}

/// Monte-Carlo violation counts, one per pair, written to `counts`
/// (length `len`, which must equal the number of pairs).
///
/// # Safety
/// Handles must be live and `counts` must point to `len` elements.
#[no_mangle]
pub unsafe extern "C" fn nncert_monte_carlo(
    net: *const NncertNetwork,
    problem: *const NncertProblem,
    samples: usize,
    seed: u64,
    counts: *mut usize,
    len: usize,
) -> NncertStatus {
    guard(|| {
        let spec = &obj(problem)?.0;
        if counts.is_null() {
            return Err(fail(NncertStatus::NullPointer, "null counts buffer"));
        }
        if len != spec.pairs.len() {
            return Err(fail(
                NncertStatus::Dimension,
                format!("counts buffer has length {len}, problem has {} pairs", spec.pairs.len()),
            ));
        }
        let c = lift(monte_carlo(&obj(net)?.0, &spec.pairs, samples, seed))?;
        std::slice::from_raw_parts_mut(counts, len).copy_from_slice(&c);
        Ok(())
    })
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nncert_report_outcome(report: *const NncertReport) -> NncertOutcome {
    report.as_ref().map_or(NncertOutcome::Unknown, |r| r.0.outcome.into())
}

/// Margin of the run, NaN for a NULL handle.
///
/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nncert_report_margin(report: *const NncertReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.margin)
}

/// Total Monte-Carlo violations over all pairs.
///
/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nncert_report_violations(report: *const NncertReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.total_violations())
}

/// The network carried by the report. Sets `*out` to NULL when the run
/// produced none.
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nncert_report_network(
    report: *const NncertReport,
    out: *mut *mut NncertNetwork,
) -> NncertStatus {
    guard(|| {
        let net = lift(obj(report)?.0.network())?;
        match net {
            Some(n) => put(out, NncertNetwork(n)),
            None => {
                if out.is_null() {
                    return Err(fail(NncertStatus::NullPointer, "null output pointer"));
                }
                *out = ptr::null_mut();
                Ok(())
            }
        }
    })
}

/// Report as JSON; free the result with [`nncert_string_free`].
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nncert_report_to_json(report: *const NncertReport, out: *mut *mut c_char) -> NncertStatus {
    guard(|| {
        let json = lift(obj(report)?.0.to_json())?;
        put_string(out, json)
    })
}

/// # Safety
/// `report` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn nncert_report_free(report: *mut NncertReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
