//! Coordinate frames, pinhole projection, Plücker line algebra and the Hesse
//! normal form.
//!
//! Frames are right-handed. The vehicle frame has x forward, y left and z up.
//! The camera optical frame has z along the optical axis, x right and y down,
//! so pixel coordinates grow rightwards and downwards from the top-left corner.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Incidence / degeneracy tolerance.
pub const INCIDENCE_TOL: f64 = 1e-9;
/// Orthonormality and round-trip tolerance.
pub const ROUND_TRIP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate points: A and B are projectively identical")]
    DegeneratePoints,
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("point projects from the camera center")]
    AtCameraCenter,
    #[error("line passes through the camera center")]
    ThroughCameraCenter,
    #[error("line at infinity has no Hesse normal form")]
    LineAtInfinity,
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Rigid pose with yaw and pitch; roll is fixed at zero.
///
/// Pitch is positive nose-up, so the forward axis in the parent frame is
/// `(cos α cos ϑ, cos α sin ϑ, sin α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub yaw: f64,
    #[serde(default)]
    pub pitch: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(position: Vector3<f64>, yaw: f64, pitch: f64) -> Self {
        Self {
            position,
            yaw: wrap_angle(yaw),
            pitch: wrap_angle(pitch),
        }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), 0.0, 0.0)
    }

    pub fn planar(x: f64, y: f64, yaw: f64) -> Self {
        Self::new(Vector3::new(x, y, 0.0), yaw, 0.0)
    }

    /// `Rz(yaw) · Ry(pitch)` mapping this frame's axes into the parent frame.
    pub fn rotation(&self) -> Matrix3<f64> {
        yaw_pitch_rotation(self.yaw, self.pitch)
    }

    /// Forward unit axis expressed in the parent frame.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation().column(0).into_owned()
    }

    /// Maps a point from this frame into the parent frame.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        vehicle_to_world(self, p)
    }
}

pub fn yaw_pitch_rotation(yaw: f64, pitch: f64) -> Matrix3<f64> {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(cp, 0.0, -sp, 0.0, 1.0, 0.0, sp, 0.0, cp);
    rz * ry
}

/// `R_wveh · p_veh + T_wveh`.
pub fn vehicle_to_world(pose: &Pose, p_veh: &Vector3<f64>) -> Vector3<f64> {
    pose.rotation() * p_veh + pose.position
}

/// `R_wvehᵀ · (p_w − T_wveh)`.
pub fn world_to_vehicle(pose: &Pose, p_w: &Vector3<f64>) -> Vector3<f64> {
    pose.rotation().transpose() * (p_w - pose.position)
}

/// Lifts a Euclidean point to homogeneous coordinates.
pub fn homogeneous(p: &Vector3<f64>) -> Vector4<f64> {
    Vector4::new(p.x, p.y, p.z, 1.0)
}

/// 3D line as a 4×4 skew-symmetric rank-2 Plücker matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PluckerLine {
    pub matrix: Matrix4<f64>,
}

impl PluckerLine {
    /// Largest absolute entry of `L + Lᵀ`.
    pub fn skew_defect(&self) -> f64 {
        (self.matrix + self.matrix.transpose()).amax()
    }

    /// Numerical rank with singular values below `tol · σ_max` treated as zero.
    pub fn rank(&self, tol: f64) -> usize {
        let sv = self.matrix.singular_values();
        let max = sv.max();
        if max == 0.0 {
            return 0;
        }
        sv.iter().filter(|s| **s > tol * max).count()
    }
}

impl std::ops::Neg for PluckerLine {
    type Output = PluckerLine;
    fn neg(self) -> PluckerLine {
        PluckerLine { matrix: -self.matrix }
    }
}

/// `L = A Bᵀ − B Aᵀ`.
pub fn plucker_from_points(a: &Vector4<f64>, b: &Vector4<f64>) -> Result<PluckerLine, GeometryError> {
    let matrix = a * b.transpose() - b * a.transpose();
    let scale = a.norm() * b.norm();
    if scale == 0.0 || matrix.amax() <= INCIDENCE_TOL * 1e-3 * scale {
        return Err(GeometryError::DegeneratePoints);
    }
    Ok(PluckerLine { matrix })
}

/// Dehomogenized `P · X`.
pub fn project_point(p: &Matrix3x4<f64>, x: &Vector4<f64>) -> Result<Vector2<f64>, GeometryError> {
    let img = p * x;
    let scale = p.amax() * x.amax();
    if img.amax() <= 1e-14 * scale {
        return Err(GeometryError::AtCameraCenter);
    }
    let depth = if x.w != 0.0 { img.z * x.w.signum() } else { img.z };
    if depth <= 0.0 {
        return Err(GeometryError::BehindCamera { depth });
    }
    Ok(Vector2::new(img.x / img.z, img.y / img.z))
}

/// Homogeneous image line `l = (l₁, l₂, l₃)`, defined up to scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousLine2D(pub Vector3<f64>);

impl HomogeneousLine2D {
    /// Signed incidence `l · (x, y, 1)` after normalizing `(l₁, l₂)` to unit length.
    pub fn incidence(&self, pt: &Vector2<f64>) -> f64 {
        let l = self.0;
        (l.x * pt.x + l.y * pt.y + l.z) / l.xy().norm()
    }
}

/// Projects a Plücker line: `[l]ₓ = P L Pᵀ`.
pub fn project_line(p: &Matrix3x4<f64>, line: &PluckerLine) -> Result<HomogeneousLine2D, GeometryError> {
    let m = p * line.matrix * p.transpose();
    let scale = p.amax() * p.amax() * line.matrix.amax();
    if m.amax() <= 1e-12 * scale {
        return Err(GeometryError::ThroughCameraCenter);
    }
    Ok(HomogeneousLine2D(Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])))
}

/// Planar line mapping under a point homography `H`: `l' = H⁻ᵀ l`.
pub fn transform_line_planar(h: &Matrix3<f64>, l: &HomogeneousLine2D) -> Option<HomogeneousLine2D> {
    h.try_inverse().map(|inv| HomogeneousLine2D(inv.transpose() * l.0))
}

/// Image or plane line in Hesse normal form `x cos γ + y sin γ − ρ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HesseLine {
    pub gamma: f64,
    pub rho: f64,
}

impl HesseLine {
    pub fn new(gamma: f64, rho: f64) -> Self {
        let line = if rho < 0.0 {
            Self {
                gamma: wrap_angle(gamma + PI),
                rho: -rho,
            }
        } else {
            Self {
                gamma: wrap_angle(gamma),
                rho,
            }
        };
        line.canonical()
    }

    fn canonical(mut self) -> Self {
        if self.rho == 0.0 && !(self.gamma > -FRAC_PI_2 && self.gamma <= FRAC_PI_2) {
            self.gamma = wrap_angle(self.gamma + PI);
        }
        self
    }

    /// Signed distance of an image point from the line.
    pub fn distance(&self, pt: &Vector2<f64>) -> f64 {
        pt.x * self.gamma.cos() + pt.y * self.gamma.sin() - self.rho
    }

    /// Measurement-vector layout `(ρ, γ)`.
    pub fn to_vector(&self) -> Vector2<f64> {
        Vector2::new(self.rho, self.gamma)
    }
}

/// Converts a homogeneous line to Hesse form with `ρ ≥ 0` and the normal
/// pointing from the origin toward the line.
pub fn line_to_hesse(l: &HomogeneousLine2D) -> Result<HesseLine, GeometryError> {
    let v = l.0;
    let n = v.xy().norm();
    if n == 0.0 || n <= 1e-15 * v.z.abs() {
        return Err(GeometryError::LineAtInfinity);
    }
    let (a, b, c) = (v.x / n, v.y / n, v.z / n);
    let (gamma, rho) = if c <= 0.0 {
        (b.atan2(a), -c)
    } else {
        ((-b).atan2(-a), c)
    };
    Ok(HesseLine::new(gamma, rho.max(0.0)))
}

/// Innovation `(Δρ, Δγ)` with `Δγ` wrapped to `(−π, π]`.
pub fn hesse_residual(measured: &HesseLine, predicted: &HesseLine) -> Vector2<f64> {
    Vector2::new(
        measured.rho - predicted.rho,
        wrap_angle(measured.gamma - predicted.gamma),
    )
}

/// Pinhole camera rigidly mounted on the vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
    /// Camera body pose in the vehicle frame (body axes: x forward, y left, z up).
    pub mount: Pose,
}

/// Vehicle-style body axes (x fwd, y left, z up) to optical axes (x right, y down, z fwd).
fn body_to_optical() -> Matrix3<f64> {
    Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0)
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidCamera(format!(
                "focal lengths must be positive (fx {}, fy {})",
                self.fx, self.fy
            )));
        }
        if !(self.cx > 0.0 && self.cx < self.width && self.cy > 0.0 && self.cy < self.height) {
            return Err(GeometryError::InvalidCamera(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Rotation world → optical frame and the camera center in world coordinates.
    pub fn world_to_optical(&self, vehicle: &Pose) -> (Matrix3<f64>, Vector3<f64>) {
        let r_wv = vehicle.rotation();
        let r_vm = self.mount.rotation();
        let r = body_to_optical() * r_vm.transpose() * r_wv.transpose();
        let center = vehicle.position + r_wv * self.mount.position;
        (r, center)
    }

    /// A world point expressed in the optical frame.
    pub fn optical_point(&self, vehicle: &Pose, p_w: &Vector3<f64>) -> Vector3<f64> {
        let (r, c) = self.world_to_optical(vehicle);
        r * (p_w - c)
    }

    /// `P = K [R | −R C]` for the camera on a vehicle at `vehicle`.
    pub fn projection(&self, vehicle: &Pose) -> Matrix3x4<f64> {
        let (r, c) = self.world_to_optical(vehicle);
        let t = -(r * c);
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        rt.set_column(3, &t);
        self.intrinsics() * rt
    }

    pub fn in_image(&self, px: &Vector2<f64>) -> bool {
        px.x >= 0.0 && px.x <= self.width && px.y >= 0.0 && px.y <= self.height
    }
}
