//! C ABI over the solver.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `_free` function. Every fallible call returns an [`LlbStatus`];
//! on failure a description is available from [`llb_last_error_message`]
//! on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use llb_core::app::config::{parse_config, SimulationConfig};
use llb_core::harness::{default_dissipation_tol, dissipation_check};
use llb_core::schemes::{run_simulation, RunStatus, SimulationResult};

/// Result codes. The first four match the exit codes of the command line.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlbStatus {
    Ok = 0,
    ConfigError = 1,
    SolverFailure = 2,
    DissipationViolation = 3,
    NullPointer = 4,
    InvalidArgument = 5,
    Panic = 6,
}

/// A validated simulation configuration.
pub struct LlbConfig(SimulationConfig);

/// The outcome of a run, including the partial trace of an aborted one.
pub struct LlbResult(SimulationResult);

/// One row of the energy trace.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LlbTraceRow {
    pub step: usize,
    pub time: f64,
    pub energy_exchange: f64,
    pub energy_internal: f64,
    pub energy_anisotropy: f64,
    pub energy_total: f64,
    pub l2_norm: f64,
    pub linf_norm: f64,
    pub fp_iterations: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn fail(status: LlbStatus, message: impl Into<String>) -> LlbStatus {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
    status
}

/// Runs `f`, turning a panic into [`LlbStatus::Panic`].
fn guard(f: impl FnOnce() -> LlbStatus) -> LlbStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "unknown panic".into());
        fail(LlbStatus::Panic, format!("internal panic: {msg}"))
    })
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(LlbStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Parses and validates a JSON configuration. On success `*out` receives a
/// handle to release with [`llb_config_free`].
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn llb_config_from_json(json: *const c_char, out: *mut *mut LlbConfig) -> LlbStatus {
    guard(|| {
        non_null!(json, out);
        *out = ptr::null_mut();
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(e) => return fail(LlbStatus::ConfigError, format!("config is not UTF-8: {e}")),
        };
        match parse_config(text) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(LlbConfig(c)));
                LlbStatus::Ok
            }
            Err(e) => fail(LlbStatus::ConfigError, e.to_string()),
        }
    })
}

/// # Safety
/// `config` must come from [`llb_config_from_json`] and not be used afterwards.
/// Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn llb_config_free(config: *mut LlbConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the configured simulation to its final time. A solver failure
/// returns [`LlbStatus::SolverFailure`] and still hands back the result so
/// the partial trace can be inspected.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn llb_simulation_run(config: *const LlbConfig, out: *mut *mut LlbResult) -> LlbStatus {
    guard(|| {
        non_null!(config, out);
        *out = ptr::null_mut();
        let result = match run_simulation(&(*config).0) {
            Ok(r) => r,
            Err(e) => return fail(LlbStatus::SolverFailure, e.to_string()),
        };
        let status = match (&result.status, &result.error) {
            (RunStatus::Completed, _) => LlbStatus::Ok,
            (RunStatus::Aborted { .. }, Some(e)) => fail(LlbStatus::SolverFailure, e.to_string()),
            (RunStatus::Aborted { reason, .. }, None) => fail(LlbStatus::SolverFailure, reason.clone()),
        };
        *out = Box::into_raw(Box::new(LlbResult(result)));
        status
    })
}

/// # Safety
/// `result` must come from [`llb_simulation_run`] and not be used afterwards.
/// Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn llb_result_free(result: *mut LlbResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn llb_result_num_rows(result: *const LlbResult, out: *mut usize) -> LlbStatus {
    guard(|| {
        non_null!(result, out);
        *out = (*result).0.trace.len();
        LlbStatus::Ok
    })
}

/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn llb_result_trace_row(
    result: *const LlbResult,
    index: usize,
    out: *mut LlbTraceRow,
) -> LlbStatus {
    guard(|| {
        non_null!(result, out);
        let rows = (*result).0.trace.rows();
        let Some(r) = rows.get(index) else {
            return fail(
                LlbStatus::InvalidArgument,
                format!("row {index} out of range (trace has {})", rows.len()),
            );
        };
        *out = LlbTraceRow {
            step: r.step,
            time: r.time,
            energy_exchange: r.energy.exchange,
            energy_internal: r.energy.internal,
            energy_anisotropy: r.energy.anisotropy,
            energy_total: r.energy.total,
            l2_norm: r.l2_norm,
            linf_norm: r.linf_norm,
            fp_iterations: r.fp_iterations,
        };
        LlbStatus::Ok
    })
}

/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn llb_result_num_vertices(result: *const LlbResult, out: *mut usize) -> LlbStatus {
    guard(|| {
        non_null!(result, out);
        *out = (*result).0.final_field.len();
        LlbStatus::Ok
    })
}

/// Copies the last computed field into `buffer` as `x, y, z` per vertex.
/// `len` must be at least three times the vertex count.
///
/// # Safety
/// `result` must be a live handle and `buffer` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn llb_result_final_field(result: *const LlbResult, buffer: *mut f64, len: usize) -> LlbStatus {
    guard(|| {
        non_null!(result, buffer);
        let flat = (*result).0.final_field.as_flat();
        if len < flat.len() {
            return fail(
                LlbStatus::InvalidArgument,
                format!("buffer holds {len} values, field needs {}", flat.len()),
            );
        }
        ptr::copy_nonoverlapping(flat.as_ptr(), buffer, flat.len());
        LlbStatus::Ok
    })
}

/// Checks that the total energy never increases beyond rounding. Returns
/// [`LlbStatus::DissipationViolation`] with the count in `*violations`
/// otherwise.
///
/// # Safety
/// `result` must be a live handle and `violations` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn llb_result_check_dissipation(result: *const LlbResult, violations: *mut usize) -> LlbStatus {
    guard(|| {
        non_null!(result, violations);
        let trace = &(*result).0.trace;
        let report = dissipation_check(trace, default_dissipation_tol(trace));
        *violations = report.violations.len();
        if report.passed() {
            LlbStatus::Ok
        } else {
            fail(
                LlbStatus::DissipationViolation,
                format!(
                    "energy increased at {} step(s), first at step {}",
                    report.violations.len(),
                    report.violations[0]
                ),
            )
        }
    })
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn llb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn llb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
