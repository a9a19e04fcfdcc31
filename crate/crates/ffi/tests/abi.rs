use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use llb_ffi::*;

fn config(json: &str) -> Result<*mut LlbConfig, (LlbStatus, String)> {
    let text = CString::new(json).unwrap();
    let mut out = ptr::null_mut();
    let status = unsafe { llb_config_from_json(text.as_ptr(), &mut out) };
    if status == LlbStatus::Ok {
        Ok(out)
    } else {
        assert!(out.is_null());
        Err((status, last_error()))
    }
}

fn last_error() -> String {
    let p = llb_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

const UNIT: &str = r#"{
    "scheme": "nonlinear", "mesh_divisions": 4,
    "params": {"gamma": 1, "alpha": 1, "beta1": 0, "beta2": 0, "sigma": 1,
               "kappa": 1, "mu": 1, "lambda": 0, "e": [0, 0, 1]},
    "initial": {"kind": "vortex"}, "time_step": 0.05, "final_time": 0.2
}"#;

#[test]
fn run_and_read_back() {
    let cfg = config(UNIT).unwrap();
    let mut res = ptr::null_mut();
    assert_eq!(unsafe { llb_simulation_run(cfg, &mut res) }, LlbStatus::Ok);
    let (mut rows, mut nv, mut violations) = (0usize, 0usize, usize::MAX);
    unsafe {
        assert_eq!(llb_result_num_rows(res, &mut rows), LlbStatus::Ok);
        assert_eq!(llb_result_num_vertices(res, &mut nv), LlbStatus::Ok);
        assert_eq!(llb_result_check_dissipation(res, &mut violations), LlbStatus::Ok);
    }
    assert_eq!((rows, nv, violations), (5, 25, 0));

    let mut row = LlbTraceRow::default();
    let mut energies = Vec::new();
    for i in 0..rows {
        assert_eq!(unsafe { llb_result_trace_row(res, i, &mut row) }, LlbStatus::Ok);
        assert_eq!(row.step, i);
        energies.push(row.energy_total);
    }
    assert!((row.time - 0.2).abs() < 1e-15);
    assert!(energies.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(
        unsafe { llb_result_trace_row(res, rows, &mut row) },
        LlbStatus::InvalidArgument
    );
    assert!(last_error().contains("out of range"));

    let mut field = vec![f64::NAN; 3 * nv];
    unsafe {
        assert_eq!(
            llb_result_final_field(res, field.as_mut_ptr(), field.len() - 1),
            LlbStatus::InvalidArgument
        );
        assert_eq!(
            llb_result_final_field(res, field.as_mut_ptr(), field.len()),
            LlbStatus::Ok
        );
    }
    assert!(field.iter().all(|v| v.is_finite()));
    assert!(field.iter().any(|v| *v != 0.0));
    unsafe {
        llb_result_free(res);
        llb_config_free(cfg);
    }
}

#[test]
fn config_errors_carry_a_message() {
    let (status, message) = config("{}").unwrap_err();
    assert_eq!(status, LlbStatus::ConfigError);
    assert!(message.contains("preset"));
    let (status, message) = config(r#"{"preset":"sim1","scheme":"nonlinear"}"#).unwrap_err();
    assert_eq!(status, LlbStatus::ConfigError);
    assert!(message.contains("beta2"));
}

#[test]
fn solver_failure_keeps_the_partial_result() {
    let json = UNIT.replace(
        "\"final_time\": 0.2",
        "\"final_time\": 0.2, \"solver\": {\"fp_max_iter\": 1}",
    );
    let cfg = config(&json).unwrap();
    let mut res = ptr::null_mut();
    assert_eq!(unsafe { llb_simulation_run(cfg, &mut res) }, LlbStatus::SolverFailure);
    assert!(!res.is_null());
    assert!(last_error().contains("fixed-point"));
    let mut rows = 0;
    assert_eq!(unsafe { llb_result_num_rows(res, &mut rows) }, LlbStatus::Ok);
    assert_eq!(rows, 1);
    unsafe {
        llb_result_free(res);
        llb_config_free(cfg);
    }
}

#[test]
fn null_pointers_are_rejected() {
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { llb_config_from_json(ptr::null(), &mut out) },
        LlbStatus::NullPointer
    );
    assert!(last_error().contains("json"));
    let mut res = ptr::null_mut();
    assert_eq!(
        unsafe { llb_simulation_run(ptr::null(), &mut res) },
        LlbStatus::NullPointer
    );
    let mut n = 0;
    assert_eq!(
        unsafe { llb_result_num_rows(ptr::null(), &mut n) },
        LlbStatus::NullPointer
    );
    unsafe {
        llb_config_free(ptr::null_mut());
        llb_result_free(ptr::null_mut());
    }
}

#[test]
fn status_codes_are_stable() {
    let codes = [
        LlbStatus::Ok,
        LlbStatus::ConfigError,
        LlbStatus::SolverFailure,
        LlbStatus::DissipationViolation,
        LlbStatus::NullPointer,
        LlbStatus::InvalidArgument,
        LlbStatus::Panic,
    ];
    for (i, c) in codes.iter().enumerate() {
        assert_eq!(*c as i32, i as i32);
    }
    let v = unsafe { CStr::from_ptr(llb_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_interface_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/llb.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "llb_config_from_json",
        "llb_config_free",
        "llb_simulation_run",
        "llb_result_free",
        "llb_result_num_rows",
        "llb_result_trace_row",
        "llb_result_num_vertices",
        "llb_result_final_field",
        "llb_result_check_dissipation",
        "llb_last_error_message",
        "llb_version",
        "LLB_STATUS_SOLVER_FAILURE = 2",
        "typedef struct LlbConfig LlbConfig;",
    ] {
        assert!(text.contains(name), "{name}");
    }
    // The syntax check needs a C compiler; skip quietly where there is none.
    if let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .output()
    {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
