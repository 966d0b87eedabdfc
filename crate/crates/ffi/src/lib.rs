//! C ABI over `rcp-core`.
//!
//! Every entry point returns an [`RcpStatus`]; on failure a message is kept per thread
//! and read with [`rcp_last_error`]. Handles are opaque and released with their `_free`
//! function; strings returned by the library are released with [`rcp_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rcp_core::equilibrium::solve_equilibrium_case_a;
use rcp_core::harness::{load_scenario, run_check, run_sweep, write_trace_file, CheckOutcome, Scenario, SweepSpec};
use rcp_core::sim::{simulate, Classification, SimTrace};
use rcp_core::stability::{case_a_alpha_prime, case_a_global_bound};
use rcp_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Validation = 4,
    Domain = 5,
    Simulation = 6,
    Io = 7,
    Internal = 8,
}

/// A validated scenario.
pub struct RcpScenario {
    inner: Scenario,
}

/// Result of a stability check.
pub struct RcpReport {
    inner: CheckOutcome,
}

/// A simulated trajectory.
pub struct RcpTrace {
    inner: SimTrace,
}

/// Flat view of a stability report. Fields guarded by a `has_*` flag are meaningful
/// only when the flag is set; `in_scope` is false for multi-link scenarios, in which
/// case every other field is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RcpReportValues {
    pub in_scope: bool,
    pub y_bar: f64,
    pub r_bar: f64,
    pub t_bar: f64,
    pub routes: usize,
    pub k_t_f0: f64,
    pub theorem_lhs: f64,
    pub theorem_ok: bool,
    pub has_constants: bool,
    pub w: f64,
    pub f1: f64,
    pub f2: f64,
    pub has_case_a: bool,
    pub case_a_alpha_prime: f64,
    pub case_a_a_max: f64,
    pub case_a_ok: bool,
    pub has_case_b: bool,
    pub case_b_ok: bool,
    pub local_pi4_ok: bool,
    pub has_local_pi2: bool,
    pub local_pi2_ok: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcpClassKind {
    Converged = 0,
    Oscillating = 1,
    BlowUp = 2,
    Undetermined = 3,
}

/// Trajectory classification; values not defined for `kind` are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcpClassification {
    pub kind: RcpClassKind,
    pub settling_time: f64,
    pub amplitude: f64,
    pub period: f64,
    pub t_fail: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcpSeries {
    /// Sample times; the index argument is ignored.
    Time = 0,
    /// Fair rate `R` of a link.
    Rate = 1,
    /// Aggregate arrival `y` at a link.
    Aggregate = 2,
    /// Flow rate `x` of a route.
    Flow = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> RcpStatus {
    match e {
        Error::Parse(_) => RcpStatus::Parse,
        Error::Validation { .. } => RcpStatus::Validation,
        Error::Io { .. } => RcpStatus::Io,
        Error::Domain(_)
        | Error::Bracket { .. }
        | Error::GainTooLarge(_)
        | Error::NonContractive { .. }
        | Error::Topology(_) => RcpStatus::Domain,
        Error::HistoryUnderflow { .. } | Error::Config(_) => RcpStatus::Simulation,
    }
}

struct Failure(RcpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RcpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RcpStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RcpStatus::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(RcpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(RcpStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|e| Failure(RcpStatus::Internal, e.to_string()))
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn rcp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn rcp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse and validate a scenario from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcp_scenario_from_json(json: *const c_char, out: *mut *mut RcpScenario) -> RcpStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let inner = Scenario::from_json_str(text)?;
        write_out(out, Box::into_raw(Box::new(RcpScenario { inner })))
    })
}

/// Load and validate a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcp_scenario_from_path(path: *const c_char, out: *mut *mut RcpScenario) -> RcpStatus {
    guard(|| {
        let path = read_str(path, "path")?;
        let inner = load_scenario(path)?;
        write_out(out, Box::into_raw(Box::new(RcpScenario { inner })))
    })
}

/// # Safety
/// `s` must be null or a handle from `rcp_scenario_from_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rcp_scenario_free(s: *mut RcpScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Evaluate every stability condition.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcp_check(scenario: *const RcpScenario, out: *mut *mut RcpReport) -> RcpStatus {
    guard(|| {
        let s = deref(scenario, "scenario")?;
        let inner = run_check(&s.inner)?;
        write_out(out, Box::into_raw(Box::new(RcpReport { inner })))
    })
}

/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcp_report_values(report: *const RcpReport, out: *mut RcpReportValues) -> RcpStatus {
    guard(|| {
        let r = deref(report, "report")?;
        let Some(rep) = r.inner.report() else {
            return write_out(out, RcpReportValues::default());
        };
        let eq = &rep.equilibrium;
        let tc = rep.constants;
        write_out(
            out,
            RcpReportValues {
                in_scope: true,
                y_bar: eq.y_bar,
                r_bar: eq.r_bar,
                t_bar: eq.t_bar,
                routes: eq.routes,
                k_t_f0: rep.k_t_f0,
                theorem_lhs: rep.theorem_lhs,
                theorem_ok: rep.theorem_verdict,
                has_constants: tc.is_some(),
                w: tc.map_or(f64::NAN, |c| c.w),
                f1: tc.map_or(f64::NAN, |c| c.f1),
                f2: tc.map_or(f64::NAN, |c| c.f2),
                has_case_a: rep.case_a_verdict.is_some(),
                case_a_alpha_prime: rep.case_a_alpha_prime.unwrap_or(f64::NAN),
                case_a_a_max: rep.case_a_a_max.unwrap_or(f64::NAN),
                case_a_ok: rep.case_a_verdict.unwrap_or(false),
                has_case_b: rep.case_b_verdict.is_some(),
                case_b_ok: rep.case_b_verdict.unwrap_or(false),
                local_pi4_ok: rep.local_pi4_verdict,
                has_local_pi2: rep.local_pi2_verdict.is_some(),
                local_pi2_ok: rep.local_pi2_verdict.unwrap_or(false),
            },
        )
    })
}

/// Human-readable report; free with `rcp_string_free`.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcp_report_render(report: *const RcpReport, out: *mut *mut c_char) -> RcpStatus {
    guard(|| {
        let r = deref(report, "report")?;
        write_out(out, into_c_string(r.inner.to_string())?)
    })
}

/// # Safety
/// `r` must be null or a handle from `rcp_check` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rcp_report_free(r: *mut RcpReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Integrate the scenario with its own simulation settings.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcp_simulate(scenario: *const RcpScenario, out: *mut *mut RcpTrace) -> RcpStatus {
    guard(|| {
        let s = deref(scenario, "scenario")?;
        let inner = simulate(&s.inner.network, &s.inner.sim)?;
        write_out(out, Box::into_raw(Box::new(RcpTrace { inner })))
    })
}

/// # Safety
/// `t` must be null or a handle from `rcp_simulate` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rcp_trace_free(t: *mut RcpTrace) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of samples, links and routes of a trace.
///
/// # Safety
/// `trace` must be a live handle; each output pointer must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn rcp_trace_dims(
    trace: *const RcpTrace,
    samples: *mut usize,
    links: *mut usize,
    routes: *mut usize,
) -> RcpStatus {
    guard(|| {
        let t = &deref(trace, "trace")?.inner;
        for (p, v) in [
            (samples, t.len()),
            (links, t.link_ids.len()),
            (routes, t.route_ids.len()),
        ] {
            if !p.is_null() {
                p.write(v);
            }
        }
        Ok(())
    })
}

/// Borrow one series of a trace. The pointer stays valid until the trace is freed.
///
/// # Safety
/// `trace` must be a live handle; `data` and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcp_trace_series(
    trace: *const RcpTrace,
    series: RcpSeries,
    index: usize,
    data: *mut *const f64,
    len: *mut usize,
) -> RcpStatus {
    guard(|| {
        let t = &deref(trace, "trace")?.inner;
        let values = match series {
            RcpSeries::Time => Some(&t.times),
            RcpSeries::Rate => t.rates.get(index),
            RcpSeries::Aggregate => t.aggregates.get(index),
            RcpSeries::Flow => t.flows.get(index),
        }
        .ok_or_else(|| Failure(RcpStatus::Domain, format!("series index {index} out of range")))?;
        write_out(data, values.as_ptr())?;
        write_out(len, values.len())
    })
}

/// # Safety
/// `trace` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcp_trace_classification(trace: *const RcpTrace, out: *mut RcpClassification) -> RcpStatus {
    guard(|| {
        let t = &deref(trace, "trace")?.inner;
        let nan = f64::NAN;
        let c = match t.classification {
            Classification::Converged { settling_time } => RcpClassification {
                kind: RcpClassKind::Converged,
                settling_time,
                amplitude: nan,
                period: nan,
                t_fail: nan,
            },
            Classification::Oscillating { amplitude, period } => RcpClassification {
                kind: RcpClassKind::Oscillating,
                settling_time: nan,
                amplitude,
                period,
                t_fail: nan,
            },
            Classification::BlowUp { t_fail } => RcpClassification {
                kind: RcpClassKind::BlowUp,
                settling_time: nan,
                amplitude: nan,
                period: nan,
                t_fail,
            },
            Classification::Undetermined => RcpClassification {
                kind: RcpClassKind::Undetermined,
                settling_time: nan,
                amplitude: nan,
                period: nan,
                t_fail: nan,
            },
        };
        write_out(out, c)
    })
}

/// Write the trace as CSV.
///
/// # Safety
/// `trace` must be a live handle; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rcp_trace_write_csv(trace: *const RcpTrace, path: *const c_char) -> RcpStatus {
    guard(|| {
        let t = &deref(trace, "trace")?.inner;
        let path = read_str(path, "path")?;
        Ok(write_trace_file(t, Path::new(path))?)
    })
}

/// Equilibrium aggregate `ȳ` with queue feedback.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcp_case_a_equilibrium(capacity: f64, b: f64, sigma2: f64, out: *mut f64) -> RcpStatus {
    guard(|| write_out(out, solve_equilibrium_case_a(capacity, b, sigma2)?.y_bar))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcp_case_a_alpha_prime(b: f64, sigma2: f64, out: *mut f64) -> RcpStatus {
    guard(|| write_out(out, case_a_alpha_prime(b, sigma2)?))
}

/// Largest gain certified by the closed-form bound with queue feedback.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcp_case_a_global_bound(b: f64, sigma2: f64, out: *mut f64) -> RcpStatus {
    guard(|| write_out(out, case_a_global_bound(b, sigma2)?))
}

/// Run a sweep given as JSON text and return its CSV; free with `rcp_string_free`.
/// A string `base` in the spec is resolved against `base_dir` (null for the current directory).
///
/// # Safety
/// `spec_json` must be a NUL-terminated string, `base_dir` null or one; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcp_sweep_csv(
    spec_json: *const c_char,
    base_dir: *const c_char,
    workers: usize,
    out: *mut *mut c_char,
) -> RcpStatus {
    guard(|| {
        let text = read_str(spec_json, "spec_json")?;
        let dir = if base_dir.is_null() {
            "."
        } else {
            read_str(base_dir, "base_dir")?
        };
        let spec = SweepSpec::from_json_str(text, Path::new(dir))?;
        let csv = run_sweep(&spec, workers)?.to_csv()?;
        write_out(out, into_c_string(csv)?)
    })
}
