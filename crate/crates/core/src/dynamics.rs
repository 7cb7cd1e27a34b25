//! Bicycle motion model with vertical clothoid road states.
//!
//! Two filter variants share one code path:
//!
//! * [`Variant::Flat2D`], 7 states `(x, y, ẋ, ẏ, ϑ, ϑ̇, φ)`;
//! * [`Variant::Full3D`], 13 states
//!   `(x, y, z, ẋ, ẏ, ż, ϑ, ϑ̇, α, α̇, φ, C₀, C₁)`.
//!
//! The continuous model is the one whose Jacobian is the printed flat-road
//! transition matrix: positions integrate the velocity states, velocities are
//! noise driven, and heading integrates `(v/L)·tan φ` with
//! `v = ‖(ẋ, ẏ[, ż])‖`. The 3D variant adds `ż`-coupled height
//! `dz/dt = v·sin α`, pitch `dα/dt = C₀·v` and `dC₀/dt = C₁·v`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Pose};

/// Below this speed the `1/v` Jacobian terms are not evaluated.
pub const V_MIN: f64 = 0.1;
/// Largest admissible integration step.
pub const MAX_DT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("steering angle {steering} rad is at or beyond the tan singularity")]
    SteeringSingularity { steering: f64 },
    #[error("speed {speed} m/s is below the Jacobian guard {V_MIN} m/s")]
    NearZeroSpeed { speed: f64 },
    #[error("time step {dt} s outside (0, {MAX_DT}]")]
    InvalidTimeStep { dt: f64 },
    #[error("state has {got} elements, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "2d")]
    Flat2D,
    #[serde(rename = "3d")]
    Full3D,
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "2d" | "2D" => Ok(Variant::Flat2D),
            "3d" | "3D" => Ok(Variant::Full3D),
            other => Err(format!("unknown filter variant {other:?} (expected 2d or 3d)")),
        }
    }
}

/// Index map of one state layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub dim: usize,
    pub x: usize,
    pub y: usize,
    pub z: Option<usize>,
    pub vx: usize,
    pub vy: usize,
    pub vz: Option<usize>,
    pub yaw: usize,
    pub yaw_rate: usize,
    pub pitch: Option<usize>,
    pub pitch_rate: Option<usize>,
    pub steer: usize,
    pub c0: Option<usize>,
    pub c1: Option<usize>,
}

const LAYOUT_2D: Layout = Layout {
    dim: 7,
    x: 0,
    y: 1,
    z: None,
    vx: 2,
    vy: 3,
    vz: None,
    yaw: 4,
    yaw_rate: 5,
    pitch: None,
    pitch_rate: None,
    steer: 6,
    c0: None,
    c1: None,
};

const LAYOUT_3D: Layout = Layout {
    dim: 13,
    x: 0,
    y: 1,
    z: Some(2),
    vx: 3,
    vy: 4,
    vz: Some(5),
    yaw: 6,
    yaw_rate: 7,
    pitch: Some(8),
    pitch_rate: Some(9),
    steer: 10,
    c0: Some(11),
    c1: Some(12),
};

impl Variant {
    pub fn layout(self) -> &'static Layout {
        match self {
            Variant::Flat2D => &LAYOUT_2D,
            Variant::Full3D => &LAYOUT_3D,
        }
    }

    pub fn dim(self) -> usize {
        self.layout().dim
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Flat2D => "2d",
            Variant::Full3D => "3d",
        }
    }

    /// Indices of the states that are angles and must stay wrapped.
    pub fn angle_indices(self) -> Vec<usize> {
        let l = self.layout();
        let mut idx = vec![l.yaw];
        idx.extend(l.pitch);
        idx
    }

    /// Wraps the angle states of `x` in place.
    pub fn wrap(self, x: &mut DVector<f64>) {
        for i in self.angle_indices() {
            x[i] = wrap_angle(x[i]);
        }
    }

    fn check_dim(self, x: &DVector<f64>) -> Result<(), DynamicsError> {
        if x.len() != self.dim() {
            return Err(DynamicsError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// Axle distance `L` (m).
    pub wheelbase: f64,
    /// Look-ahead distance `d` of the road-height measurement (m).
    pub preview_distance: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.7,
            preview_distance: 10.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.wheelbase > 0.0) {
            return Err(DynamicsError::InvalidParams(format!(
                "wheelbase must be positive, got {}",
                self.wheelbase
            )));
        }
        if !(self.preview_distance > 0.0) {
            return Err(DynamicsError::InvalidParams(format!(
                "preview distance must be positive, got {}",
                self.preview_distance
            )));
        }
        Ok(())
    }
}

/// Flat-road state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State2D {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub yaw: f64,
    pub yaw_rate: f64,
    pub steer: f64,
}

/// Full 3D state with pitch and vertical clothoid parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub yaw: f64,
    pub yaw_rate: f64,
    pub pitch: f64,
    pub pitch_rate: f64,
    pub steer: f64,
    pub c0: f64,
    pub c1: f64,
}

impl State2D {
    pub fn to_vector(&self) -> SVector<f64, 7> {
        SVector::from([self.x, self.y, self.vx, self.vy, self.yaw, self.yaw_rate, self.steer])
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            x: v[0],
            y: v[1],
            vx: v[2],
            vy: v[3],
            yaw: v[4],
            yaw_rate: v[5],
            steer: v[6],
        }
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    /// Embeds the flat state into the 3D layout with zero height, pitch and curvature.
    pub fn lift(&self) -> State3D {
        State3D {
            x: self.x,
            y: self.y,
            vx: self.vx,
            vy: self.vy,
            yaw: self.yaw,
            yaw_rate: self.yaw_rate,
            steer: self.steer,
            ..State3D::default()
        }
    }
}

impl State3D {
    pub fn to_vector(&self) -> SVector<f64, 13> {
        SVector::from([
            self.x,
            self.y,
            self.z,
            self.vx,
            self.vy,
            self.vz,
            self.yaw,
            self.yaw_rate,
            self.pitch,
            self.pitch_rate,
            self.steer,
            self.c0,
            self.c1,
        ])
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            x: v[0],
            y: v[1],
            z: v[2],
            vx: v[3],
            vy: v[4],
            vz: v[5],
            yaw: v[6],
            yaw_rate: v[7],
            pitch: v[8],
            pitch_rate: v[9],
            steer: v[10],
            c0: v[11],
            c1: v[12],
        }
    }

    pub fn speed(&self) -> f64 {
        (self.vx * self.vx + self.vy * self.vy + self.vz * self.vz).sqrt()
    }
}

/// `v = ‖(ẋ, ẏ[, ż])‖` of a state vector in `variant` layout.
pub fn speed(variant: Variant, x: &DVector<f64>) -> f64 {
    let l = variant.layout();
    let vz = l.vz.map_or(0.0, |i| x[i]);
    (x[l.vx] * x[l.vx] + x[l.vy] * x[l.vy] + vz * vz).sqrt()
}

/// Vehicle pose carried by a state vector (z and pitch are zero for 2D).
pub fn pose_of(variant: Variant, x: &DVector<f64>) -> Pose {
    let l = variant.layout();
    Pose::new(
        nalgebra::Vector3::new(x[l.x], x[l.y], l.z.map_or(0.0, |i| x[i])),
        x[l.yaw],
        l.pitch.map_or(0.0, |i| x[i]),
    )
}

/// Road height change at distance `d` ahead: `C₀/2·d² + C₁/6·d³`.
pub fn vertical_height(c0: f64, c1: f64, d: f64) -> f64 {
    0.5 * c0 * d * d + c1 * d * d * d / 6.0
}

fn check_steering(steer: f64) -> Result<(), DynamicsError> {
    if !(steer.abs() < FRAC_PI_2) {
        return Err(DynamicsError::SteeringSingularity { steering: steer });
    }
    Ok(())
}

/// Continuous-time state derivative.
pub fn derivative(variant: Variant, x: &DVector<f64>, p: &VehicleParams) -> Result<DVector<f64>, DynamicsError> {
    variant.check_dim(x)?;
    let l = variant.layout();
    check_steering(x[l.steer])?;
    let v = speed(variant, x);
    let mut dx = DVector::zeros(l.dim);
    dx[l.x] = x[l.vx];
    dx[l.y] = x[l.vy];
    dx[l.yaw] = v / p.wheelbase * x[l.steer].tan();
    if let (Some(iz), Some(ia), Some(i0), Some(i1)) = (l.z, l.pitch, l.c0, l.c1) {
        dx[iz] = v * x[ia].sin();
        dx[ia] = x[i0] * v;
        dx[i0] = x[i1] * v;
    }
    Ok(dx)
}

pub fn derivative_2d(s: &State2D, p: &VehicleParams) -> Result<SVector<f64, 7>, DynamicsError> {
    let x = DVector::from_column_slice(s.to_vector().as_slice());
    let d = derivative(Variant::Flat2D, &x, p)?;
    Ok(SVector::from_column_slice(d.as_slice()))
}

pub fn derivative_3d(s: &State3D, p: &VehicleParams) -> Result<SVector<f64, 13>, DynamicsError> {
    let x = DVector::from_column_slice(s.to_vector().as_slice());
    let d = derivative(Variant::Full3D, &x, p)?;
    Ok(SVector::from_column_slice(d.as_slice()))
}

/// Analytic `∂f/∂x`. With `guarded`, speeds below [`V_MIN`] zero the
/// `1/v` partials instead of failing.
pub fn jacobian(
    variant: Variant,
    x: &DVector<f64>,
    p: &VehicleParams,
    guarded: bool,
) -> Result<DMatrix<f64>, DynamicsError> {
    variant.check_dim(x)?;
    let l = variant.layout();
    check_steering(x[l.steer])?;
    let v = speed(variant, x);
    let slow = v < V_MIN;
    if slow && !guarded {
        return Err(DynamicsError::NearZeroSpeed { speed: v });
    }
    let mut vel_idx = vec![l.vx, l.vy];
    vel_idx.extend(l.vz);
    // ∂v/∂(ẋ, ẏ, ż)
    let dv: Vec<(usize, f64)> = vel_idx
        .iter()
        .map(|&i| (i, if slow { 0.0 } else { x[i] / v }))
        .collect();

    let steer = x[l.steer];
    let tan = steer.tan();
    let cos = steer.cos();
    let mut j = DMatrix::zeros(l.dim, l.dim);
    j[(l.x, l.vx)] = 1.0;
    j[(l.y, l.vy)] = 1.0;
    for &(i, g) in &dv {
        j[(l.yaw, i)] = g * tan / p.wheelbase;
    }
    j[(l.yaw, l.steer)] = v / (p.wheelbase * cos * cos);

    if let (Some(iz), Some(ia), Some(i0), Some(i1)) = (l.z, l.pitch, l.c0, l.c1) {
        let (sa, ca) = x[ia].sin_cos();
        for &(i, g) in &dv {
            j[(iz, i)] = g * sa;
            j[(ia, i)] = g * x[i0];
            j[(i0, i)] = g * x[i1];
        }
        j[(iz, ia)] = v * ca;
        j[(ia, i0)] = v;
        j[(i0, i1)] = v;
    }
    Ok(j)
}

pub fn jacobian_2d(s: &State2D, p: &VehicleParams) -> Result<SMatrix<f64, 7, 7>, DynamicsError> {
    let x = DVector::from_column_slice(s.to_vector().as_slice());
    let j = jacobian(Variant::Flat2D, &x, p, false)?;
    Ok(SMatrix::from_column_slice(j.as_slice()))
}

pub fn jacobian_3d(s: &State3D, p: &VehicleParams) -> Result<SMatrix<f64, 13, 13>, DynamicsError> {
    let x = DVector::from_column_slice(s.to_vector().as_slice());
    let j = jacobian(Variant::Full3D, &x, p, false)?;
    Ok(SMatrix::from_column_slice(j.as_slice()))
}

/// Diagonal process-noise spectral densities, one per state element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessNoise(pub Vec<f64>);

impl ProcessNoise {
    pub fn zeros(variant: Variant) -> Self {
        Self(vec![0.0; variant.dim()])
    }

    pub fn validate(&self, variant: Variant) -> Result<(), DynamicsError> {
        if self.0.len() != variant.dim() {
            return Err(DynamicsError::Dimension {
                expected: variant.dim(),
                got: self.0.len(),
            });
        }
        if let Some(bad) = self.0.iter().find(|q| !(**q >= 0.0)) {
            return Err(DynamicsError::InvalidParams(format!(
                "process noise entries must be non-negative, got {bad}"
            )));
        }
        Ok(())
    }

    pub fn covariance(&self, dt: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(self.0.len(), self.0.iter().map(|q| q * dt)))
    }
}

/// One propagated step: new mean, transition matrix `Φ` and process covariance `Q`.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub state: DVector<f64>,
    pub transition: DMatrix<f64>,
    pub process_cov: DMatrix<f64>,
}

fn rk4(variant: Variant, x: &DVector<f64>, dt: f64, p: &VehicleParams) -> Result<DVector<f64>, DynamicsError> {
    let k1 = derivative(variant, x, p)?;
    let k2 = derivative(variant, &(x + &k1 * (dt / 2.0)), p)?;
    let k3 = derivative(variant, &(x + &k2 * (dt / 2.0)), p)?;
    let k4 = derivative(variant, &(x + &k3 * dt), p)?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Propagates `x` by `dt` with RK4; `Φ = I + J·dt`, `Q = diag(noise)·dt`.
pub fn step(
    variant: Variant,
    x: &DVector<f64>,
    dt: f64,
    noise: &ProcessNoise,
    p: &VehicleParams,
) -> Result<Propagation, DynamicsError> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(DynamicsError::InvalidTimeStep { dt });
    }
    noise.validate(variant)?;
    let jac = jacobian(variant, x, p, true)?;
    let mut state = rk4(variant, x, dt, p)?;
    variant.wrap(&mut state);
    let n = variant.dim();
    Ok(Propagation {
        state,
        transition: DMatrix::identity(n, n) + jac * dt,
        process_cov: noise.covariance(dt),
    })
}
