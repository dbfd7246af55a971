use std::ffi::{CStr, CString};
use std::fs;
use std::process::Command;
use std::ptr;

use aerotwin_ffi::*;

fn last_error() -> String {
    let p = at_last_error_message();
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { at_string_free(p) };
    s
}

#[test]
fn pure_functions() {
    let mut d = 0.0;
    assert_eq!(unsafe { at_haversine_m(0.0, 0.0, 0.0, 1.0, &mut d) }, AtStatus::Ok);
    assert!((d - 111_194.93).abs() < 0.01);
    assert!(at_last_error_message().is_null());

    assert_eq!(unsafe { at_slant_m(0.0, 0.0, 0.0, 0.0, 0.0, 30.0, &mut d) }, AtStatus::Ok);
    assert_eq!(d, 30.0);

    // 1 km at 1 MHz is exactly the constant term.
    assert_eq!(unsafe { at_fspl_db(1000.0, 1.0, &mut d) }, AtStatus::Ok);
    assert!((d - 32.44).abs() < 1e-12);

    let mut bits = 99;
    for (snr, want) in [(30.0, 6), (18.0, 6), (17.9, 4), (3.0, 4), (-1.0, 0)] {
        assert_eq!(unsafe { at_select_mcs(snr, 0.0, &mut bits) }, AtStatus::Ok);
        assert_eq!(bits, want, "snr {snr}");
    }
}

#[test]
fn errors_carry_messages() {
    let mut d = 0.0;
    assert_eq!(unsafe { at_haversine_m(91.0, 0.0, 0.0, 0.0, &mut d) }, AtStatus::InvalidArgument);
    assert!(last_error().contains("latitude"));
    assert_eq!(unsafe { at_haversine_m(0.0, 0.0, 0.0, 0.0, ptr::null_mut()) }, AtStatus::NullPointer);
    assert_eq!(unsafe { at_fspl_db(0.0, 3500.0, &mut d) }, AtStatus::InvalidArgument);

    let mut cfg = ptr::null_mut();
    let bad = CString::new(r#"{"nodes": []}"#).unwrap();
    let status = unsafe { at_config_from_json(bad.as_ptr(), &mut cfg) };
    assert_ne!(status, AtStatus::Ok);
    assert!(cfg.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { at_config_run(ptr::null(), ptr::null(), ptr::null_mut()) }, AtStatus::NullPointer);
}

#[test]
fn scheduler_handle_splits_evenly() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { at_scheduler_new(100, 0.0, &mut s) }, AtStatus::Ok);
    let snr = [25.0, 10.0, -5.0];
    let mut rbs = [0u32; 3];
    let mut bits = [0u64; 3];
    let mut total = [0u64; 3];
    for _ in 0..1000 {
        let st = unsafe { at_scheduler_schedule(s, snr.as_ptr(), 3, rbs.as_mut_ptr(), bits.as_mut_ptr()) };
        assert_eq!(st, AtStatus::Ok);
        assert_eq!(rbs, [50, 50, 0]);
        for i in 0..3 {
            total[i] += bits[i];
        }
    }
    // Mbps over one second.
    assert_eq!(total.map(|b| b as f64 / 1e6), [25.2, 16.8, 0.0]);
    unsafe { at_scheduler_free(s) };
    assert_eq!(unsafe { at_scheduler_new(0, 0.0, &mut s) }, AtStatus::InvalidArgument);
}

#[test]
fn run_reference_through_handles() {
    let tmp = tempfile::TempDir::new().unwrap();
    let out = CString::new(tmp.path().join("run").to_str().unwrap()).unwrap();
    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(at_config_reference(&mut cfg), AtStatus::Ok);
        assert_eq!(at_config_set_seed(cfg, 42), AtStatus::Ok);
        assert_eq!(at_config_set_duration(cfg, 5.0), AtStatus::Ok);
        let mut summary = AtRunSummary::default();
        assert_eq!(at_config_run(cfg, out.as_ptr(), &mut summary), AtStatus::Ok);
        assert_eq!(summary.steps, 50);
        assert_eq!(summary.end_ms, 5000);
        assert_eq!(at_config_run(cfg, out.as_ptr(), ptr::null_mut()), AtStatus::OutputNotEmpty);

        let mut plan = ptr::null_mut();
        assert_eq!(at_plan_from_config(cfg, &mut plan), AtStatus::Ok);
        let mut duration = 0.0;
        assert_eq!(at_plan_duration(plan, &mut duration), AtStatus::Ok);
        let mut end = AtVehicleSample::default();
        assert_eq!(at_plan_position_at(plan, duration + 10.0, &mut end), AtStatus::Ok);
        let mut start = AtVehicleSample::default();
        assert_eq!(at_plan_position_at(plan, 0.0, &mut start), AtStatus::Ok);
        // The reference mission returns to its launch point.
        assert!((end.latitude_deg - start.latitude_deg).abs() < 1e-9);
        assert!((end.longitude_deg - start.longitude_deg).abs() < 1e-9);
        at_plan_free(plan);
        at_config_free(cfg);
    }
    assert_eq!(fs::read_dir(tmp.path().join("run")).unwrap().count(), 6);
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/aerotwin.h");
    let text = fs::read_to_string(header).unwrap();
    for name in [
        "at_last_error_message",
        "at_string_free",
        "at_version",
        "at_config_reference",
        "at_config_from_json",
        "at_config_set_seed",
        "at_config_set_duration",
        "at_config_run",
        "at_config_free",
        "at_plan_from_json",
        "at_plan_from_config",
        "at_plan_duration",
        "at_plan_position_at",
        "at_plan_free",
        "at_scheduler_new",
        "at_scheduler_schedule",
        "at_scheduler_free",
        "at_haversine_m",
        "at_slant_m",
        "at_fspl_db",
        "at_select_mcs",
        "typedef struct AtConfig AtConfig;",
        "AT_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    // Syntax check with whatever C compiler is around.
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header]).output() else {
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(at_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
