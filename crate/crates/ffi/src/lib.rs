//! C ABI for the dkff filter bank, a few geometry helpers and the scenario
//! runner.
//!
//! Conventions:
//! - every fallible function returns a [`DkffStatus`]; on failure the message
//!   is available from [`dkff_last_error`] on the same thread
//! - matrices are dense, row-major `double` arrays
//! - a `DkffBank` is owned by the caller and released with [`dkff_bank_free`];
//!   strings returned by the library are released with [`dkff_string_free`]
//! - no function unwinds across the boundary; a caught panic maps to
//!   [`DkffStatus::Panic`]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dkff::filter::{FilterBank, FilterError, LinearProcess, Linearized, StateEstimate};
use dkff::geometry::{line_to_hesse, wrap_angle, HomogeneousLine2D};
use dkff::map::Map;
use dkff::measurement::SensorKind;
use dkff::sim::output;
use dkff::sim::run::run_scenario;
use dkff::sim::scenario::Scenario;
use nalgebra::{DMatrix, DVector, Vector3};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DkffStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A covariance lost positive definiteness or a system was singular.
    Numerical = 3,
    /// Malformed scenario or map document.
    Config = 4,
    Panic = 5,
}

/// Sensor a measurement belongs to; each has its own local filter.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DkffSensor {
    Gps = 0,
    Odometry = 1,
    Point3d = 2,
    CameraPoint = 3,
    CameraLine = 4,
}

impl From<DkffSensor> for SensorKind {
    fn from(s: DkffSensor) -> Self {
        match s {
            DkffSensor::Gps => SensorKind::Gps,
            DkffSensor::Odometry => SensorKind::Odometry,
            DkffSensor::Point3d => SensorKind::Point3d,
            DkffSensor::CameraPoint => SensorKind::CameraPoint,
            DkffSensor::CameraLine => SensorKind::CameraLine,
        }
    }
}

/// One linearized measurement: innovation `z - h(x)` of length `rows`,
/// Jacobian `rows x n` and noise covariance `rows x rows`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DkffMeasurement {
    pub sensor: DkffSensor,
    pub rows: u32,
    pub innovation: *const f64,
    pub jacobian: *const f64,
    pub noise: *const f64,
}

/// Opaque filter bank with one local filter per sensor and a linear process
/// model `dx/dt = F x` with white noise intensity `Qc`.
pub struct DkffBank {
    bank: FilterBank,
    dim: usize,
}

struct Failure(DkffStatus, String);

impl From<FilterError> for Failure {
    fn from(e: FilterError) -> Self {
        let status = match e {
            FilterError::Dimension { .. }
            | FilterError::InvalidEstimate(_)
            | FilterError::InvalidTimeStep(_)
            | FilterError::OverlappingSubscription(_)
            | FilterError::Unrouted(_)
            | FilterError::NoEstimates => DkffStatus::InvalidArgument,
            _ => DkffStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DkffStatus {
    set_last_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DkffStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            DkffStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(DkffStatus::NullPointer, format!("{name} is null"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn matrix(p: *const f64, rows: usize, cols: usize, name: &str) -> Result<DMatrix<f64>, Failure> {
    Ok(DMatrix::from_row_slice(rows, cols, slice(p, rows * cols, name)?))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(DkffStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn dkff_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a bank for an `n`-dimensional state.
///
/// # Safety
/// `mean` must hold `n` values; `covariance`, `f` and `qc` must hold `n*n`
/// values each; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dkff_bank_create(
    n: u32,
    mean: *const f64,
    covariance: *const f64,
    f: *const f64,
    qc: *const f64,
    out: *mut *mut DkffBank,
) -> DkffStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let n = n as usize;
        if n == 0 {
            return Err(Failure(
                DkffStatus::InvalidArgument,
                "state dimension must be positive".into(),
            ));
        }
        let init = StateEstimate::new(
            DVector::from_column_slice(slice(mean, n, "mean")?),
            matrix(covariance, n, n, "covariance")?,
        )?;
        let process = LinearProcess {
            f: matrix(f, n, n, "f")?,
            qc: matrix(qc, n, n, "qc")?,
        };
        let bank = FilterBank::per_sensor(init, Box::new(process))?;
        *out = Box::into_raw(Box::new(DkffBank { bank, dim: n }));
        Ok(())
    })
}

/// Releases a bank. Null is ignored.
///
/// # Safety
/// `bank` must come from [`dkff_bank_create`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dkff_bank_free(bank: *mut DkffBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// State dimension of a bank, 0 for null.
///
/// # Safety
/// `bank` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dkff_bank_dim(bank: *const DkffBank) -> u32 {
    bank.as_ref().map_or(0, |b| b.dim as u32)
}

/// Propagates every filter by `dt` seconds.
///
/// # Safety
/// `bank` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dkff_bank_predict(bank: *mut DkffBank, dt: f64) -> DkffStatus {
    guard(|| {
        let b = bank.as_mut().ok_or_else(|| null("bank"))?;
        b.bank.predict(dt)?;
        Ok(())
    })
}

/// Runs the local updates for `count` measurements and fuses the result.
/// On failure the bank keeps its previous state.
///
/// # Safety
/// `bank` must be a live handle and `measurements` must point to `count`
/// entries whose arrays match their `rows` and the bank dimension.
#[no_mangle]
pub unsafe extern "C" fn dkff_bank_update(
    bank: *mut DkffBank,
    measurements: *const DkffMeasurement,
    count: usize,
) -> DkffStatus {
    guard(|| {
        let b = bank.as_mut().ok_or_else(|| null("bank"))?;
        if count == 0 {
            return Ok(());
        }
        if measurements.is_null() {
            return Err(null("measurements"));
        }
        let n = b.dim;
        let mut batch = Vec::with_capacity(count);
        for m in std::slice::from_raw_parts(measurements, count) {
            let rows = m.rows as usize;
            if rows == 0 {
                return Err(Failure(DkffStatus::InvalidArgument, "measurement has no rows".into()));
            }
            batch.push((
                SensorKind::from(m.sensor),
                Linearized {
                    innovation: DVector::from_column_slice(slice(m.innovation, rows, "innovation")?),
                    h: matrix(m.jacobian, rows, n, "jacobian")?,
                    r: matrix(m.noise, rows, rows, "noise")?,
                },
            ));
        }
        b.bank.update(&batch)?;
        Ok(())
    })
}

/// Copies the fused mean (`n` values) and covariance (`n*n`, row-major).
/// Either output may be null to skip it.
///
/// # Safety
/// `bank` must be a live handle; non-null outputs must have room for the values.
#[no_mangle]
pub unsafe extern "C" fn dkff_bank_state(bank: *const DkffBank, mean: *mut f64, covariance: *mut f64) -> DkffStatus {
    guard(|| {
        let b = bank.as_ref().ok_or_else(|| null("bank"))?;
        let est = b.bank.master();
        let n = b.dim;
        if !mean.is_null() {
            std::slice::from_raw_parts_mut(mean, n).copy_from_slice(est.mean.as_slice());
        }
        if !covariance.is_null() {
            let out = std::slice::from_raw_parts_mut(covariance, n * n);
            for i in 0..n {
                for j in 0..n {
                    out[i * n + j] = est.covariance[(i, j)];
                }
            }
        }
        Ok(())
    })
}

/// Wraps an angle to (-pi, pi].
#[no_mangle]
pub extern "C" fn dkff_wrap_angle(a: f64) -> f64 {
    wrap_angle(a)
}

/// Hesse normal form of the image line `a x + b y + c = 0`, with `rho >= 0`.
///
/// # Safety
/// `gamma` and `rho` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dkff_line_to_hesse(a: f64, b: f64, c: f64, gamma: *mut f64, rho: *mut f64) -> DkffStatus {
    guard(|| {
        if gamma.is_null() || rho.is_null() {
            return Err(null("output"));
        }
        let h = line_to_hesse(&HomogeneousLine2D(Vector3::new(a, b, c)))
            .map_err(|e| Failure(DkffStatus::InvalidArgument, e.to_string()))?;
        *gamma = h.gamma;
        *rho = h.rho;
        Ok(())
    })
}

/// Simulates, filters and scores a scenario against the given map. `out`
/// receives the per-tick records and summary as a JSON document.
///
/// # Safety
/// Both inputs must be nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dkff_run_scenario(
    scenario_json: *const c_char,
    map_json: *const c_char,
    out: *mut *mut c_char,
) -> DkffStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let config = |e: &dyn std::fmt::Display| Failure(DkffStatus::Config, e.to_string());
        let scn = Scenario::from_json_str(text(scenario_json, "scenario_json")?, &[]).map_err(|e| config(&e))?;
        let map = Map::from_json_str(text(map_json, "map_json")?).map_err(|e| config(&e))?;
        let result = run_scenario(&scn, &map).map_err(|e| Failure(DkffStatus::Numerical, e.to_string()))?;
        let json = CString::new(output::to_json(&result)).expect("JSON has no nul bytes");
        *out = json.into_raw();
        Ok(())
    })
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dkff_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sensors_map_one_to_one() {
        let all = [
            DkffSensor::Gps,
            DkffSensor::Odometry,
            DkffSensor::Point3d,
            DkffSensor::CameraPoint,
            DkffSensor::CameraLine,
        ];
        let kinds: Vec<SensorKind> = all.iter().map(|&s| s.into()).collect();
        assert_eq!(kinds, SensorKind::ALL.to_vec());
    }

    #[test]
    fn panics_are_contained() {
        assert_eq!(guard(|| panic!("boom")), DkffStatus::Panic);
        assert_eq!(guard(|| Ok(())), DkffStatus::Ok);
    }
}
