use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use dkff::map::synth::RoadLoop;
use dkff::sim::scenario::Scenario;
use dkff_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(dkff_last_error()) }
        .to_string_lossy()
        .into_owned()
}

/// Two-state constant-velocity bank: position and velocity.
fn cv_bank() -> *mut DkffBank {
    let mean = [0.0, 1.0];
    let cov = [1.0, 0.0, 0.0, 1.0];
    let f = [0.0, 1.0, 0.0, 0.0];
    let qc = [0.0, 0.0, 0.0, 0.01];
    let mut bank = ptr::null_mut();
    let s = unsafe { dkff_bank_create(2, mean.as_ptr(), cov.as_ptr(), f.as_ptr(), qc.as_ptr(), &mut bank) };
    assert_eq!(s, DkffStatus::Ok, "{}", last_error());
    assert!(!bank.is_null());
    bank
}

fn state(bank: *const DkffBank) -> ([f64; 2], [f64; 4]) {
    let (mut m, mut p) = ([0.0; 2], [0.0; 4]);
    assert_eq!(
        unsafe { dkff_bank_state(bank, m.as_mut_ptr(), p.as_mut_ptr()) },
        DkffStatus::Ok
    );
    (m, p)
}

#[test]
fn scalar_position_update_matches_the_kalman_gain() {
    let bank = cv_bank();
    assert_eq!(unsafe { dkff_bank_dim(bank) }, 2);
    // measure position 2 with unit variance from the prior N(0, 1)
    let (z, h, r) = ([2.0], [1.0, 0.0], [1.0]);
    let m = DkffMeasurement {
        sensor: DkffSensor::Gps,
        rows: 1,
        innovation: z.as_ptr(),
        jacobian: h.as_ptr(),
        noise: r.as_ptr(),
    };
    assert_eq!(unsafe { dkff_bank_update(bank, &m, 1) }, DkffStatus::Ok);
    let (mean, cov) = state(bank);
    assert!((mean[0] - 1.0).abs() < 1e-12 && (mean[1] - 1.0).abs() < 1e-12);
    assert!((cov[0] - 0.5).abs() < 1e-12 && (cov[3] - 1.0).abs() < 1e-12);
    assert_eq!(cov[1], cov[2]);

    assert_eq!(unsafe { dkff_bank_predict(bank, 1.0) }, DkffStatus::Ok);
    let (mean, _) = state(bank);
    assert!((mean[0] - 2.0).abs() < 1e-9, "{mean:?}");
    unsafe { dkff_bank_free(bank) };
}

#[test]
fn errors_come_back_as_codes_with_messages() {
    let mut bank = ptr::null_mut();
    let one = [1.0];
    let neg = [-1.0];
    let s = unsafe { dkff_bank_create(1, one.as_ptr(), neg.as_ptr(), one.as_ptr(), one.as_ptr(), &mut bank) };
    assert_eq!(s, DkffStatus::InvalidArgument);
    assert!(bank.is_null());
    assert!(!last_error().is_empty());
    let s = unsafe { dkff_bank_create(1, ptr::null(), one.as_ptr(), one.as_ptr(), one.as_ptr(), &mut bank) };
    assert_eq!(s, DkffStatus::NullPointer);
    assert!(last_error().contains("mean"));

    let b = cv_bank();
    assert_eq!(unsafe { dkff_bank_predict(b, -1.0) }, DkffStatus::InvalidArgument);
    assert_eq!(
        unsafe { dkff_bank_predict(ptr::null_mut(), 1.0) },
        DkffStatus::NullPointer
    );
    let (z, h) = ([0.0], [1.0, 0.0]);
    let m = DkffMeasurement {
        sensor: DkffSensor::Odometry,
        rows: 1,
        innovation: z.as_ptr(),
        jacobian: h.as_ptr(),
        noise: neg.as_ptr(),
    };
    let before = state(b);
    assert_ne!(unsafe { dkff_bank_update(b, &m, 1) }, DkffStatus::Ok);
    assert_eq!(state(b), before);
    // a successful call clears the message
    assert_eq!(unsafe { dkff_bank_predict(b, 0.1) }, DkffStatus::Ok);
    assert!(last_error().is_empty());
    unsafe {
        dkff_bank_free(b);
        dkff_bank_free(ptr::null_mut());
    }
}

#[test]
fn geometry_helpers() {
    assert!((dkff_wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
    let (mut gamma, mut rho) = (0.0, 0.0);
    assert_eq!(
        unsafe { dkff_line_to_hesse(3.0, 4.0, -10.0, &mut gamma, &mut rho) },
        DkffStatus::Ok
    );
    assert!((rho - 2.0).abs() < 1e-15 && (gamma - 4f64.atan2(3.0)).abs() < 1e-15);
    assert_eq!(
        unsafe { dkff_line_to_hesse(0.0, 0.0, 1.0, &mut gamma, &mut rho) },
        DkffStatus::InvalidArgument
    );
}

#[test]
fn scenario_runs_to_json() {
    let road = RoadLoop::default();
    let mut scn = Scenario::default_loop(&road);
    scn.duration = 20.0;
    let scn_json = CString::new(scn.to_json()).unwrap();
    let map_json = CString::new(road.build_map().to_canonical_json()).unwrap();
    let mut out = ptr::null_mut();
    let s = unsafe { dkff_run_scenario(scn_json.as_ptr(), map_json.as_ptr(), &mut out) };
    assert_eq!(s, DkffStatus::Ok, "{}", last_error());
    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { dkff_string_free(out) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["summary"]["ticks"], 200);
    assert_eq!(v["records"].as_array().unwrap().len(), 200);

    let broken = CString::new("{\"duration\": 1}").unwrap();
    let s = unsafe { dkff_run_scenario(broken.as_ptr(), map_json.as_ptr(), &mut out) };
    assert_eq!(s, DkffStatus::Config);
    assert!(out.is_null());
}

#[test]
fn header_is_valid_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/dkff.h");
    assert!(std::fs::read_to_string(&header).unwrap().contains("dkff_bank_update"));
    let Ok(status) = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(dir.join("tests/c/smoke.c"))
        .status()
    else {
        eprintln!("no C compiler found; skipping syntax check");
        return;
    };
    assert!(status.success());
}
