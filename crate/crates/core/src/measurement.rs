//! Sensor models: predicted measurements, innovations and Jacobians `H` for
//! GPS, odometry, 3D-sensor landmarks and mono-camera points and lines.
//!
//! All predictions take a state vector in either [`Variant`] layout. The flat
//! variant sees the world with zero vehicle height and pitch and drops the
//! vertical rows of GPS and 3D-sensor measurements.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, pose_of, speed, Variant, VehicleParams, V_MIN};
use crate::filter::Linearized;
use crate::geometry::{
    hesse_residual, homogeneous, line_to_hesse, plucker_from_points, project_line, project_point, world_to_vehicle,
    wrap_angle, CameraModel, GeometryError, HesseLine, HomogeneousLine2D,
};
use crate::linalg;

/// Central-difference step for numeric camera-line Jacobians.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasurementError {
    #[error("measurement kind {measured:?} does not match prediction kind {predicted:?}")]
    KindMismatch {
        measured: SensorKind,
        predicted: SensorKind,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("noise covariance is not symmetric positive definite")]
    IndefiniteNoise,
    #[error("{0:?} measurement needs {1} in its context")]
    MissingContext(SensorKind, &'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dynamics(#[from] dynamics::DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Gps,
    Odometry,
    Point3d,
    CameraPoint,
    CameraLine,
}

impl SensorKind {
    pub const ALL: [SensorKind; 5] = [
        SensorKind::Gps,
        SensorKind::Odometry,
        SensorKind::Point3d,
        SensorKind::CameraPoint,
        SensorKind::CameraLine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SensorKind::Gps => "gps",
            SensorKind::Odometry => "odometry",
            SensorKind::Point3d => "point3d",
            SensorKind::CameraPoint => "camera_point",
            SensorKind::CameraLine => "camera_line",
        }
    }
}

/// Map feature a measurement is associated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureId {
    Landmark(u32),
    Segment { polyline: u32, index: u32 },
}

/// World geometry of an associated feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureGeometry {
    Point(Vector3<f64>),
    Segment(Vector3<f64>, Vector3<f64>),
}

/// Odometry readings: speed, yaw rate, pitch rate, steering and road height
/// change at the preview distance.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OdometryBundle {
    pub speed: f64,
    pub yaw_rate: f64,
    pub pitch_rate: f64,
    pub steering: f64,
    pub height: f64,
}

impl OdometryBundle {
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_vec(vec![
            self.speed,
            self.yaw_rate,
            self.pitch_rate,
            self.steering,
            self.height,
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasurementKind {
    Gps(Vector3<f64>),
    Odometry(OdometryBundle),
    /// Landmark position in the vehicle frame.
    Point3d {
        feature: FeatureId,
        point: Vector3<f64>,
    },
    CameraPoint {
        feature: FeatureId,
        pixel: Vector2<f64>,
    },
    CameraLine {
        feature: FeatureId,
        line: HesseLine,
    },
}

impl MeasurementKind {
    pub fn sensor(&self) -> SensorKind {
        match self {
            MeasurementKind::Gps(_) => SensorKind::Gps,
            MeasurementKind::Odometry(_) => SensorKind::Odometry,
            MeasurementKind::Point3d { .. } => SensorKind::Point3d,
            MeasurementKind::CameraPoint { .. } => SensorKind::CameraPoint,
            MeasurementKind::CameraLine { .. } => SensorKind::CameraLine,
        }
    }

    pub fn feature(&self) -> Option<FeatureId> {
        match self {
            MeasurementKind::Point3d { feature, .. }
            | MeasurementKind::CameraPoint { feature, .. }
            | MeasurementKind::CameraLine { feature, .. } => Some(*feature),
            _ => None,
        }
    }

    pub fn set_feature(&mut self, id: FeatureId) {
        match self {
            MeasurementKind::Point3d { feature, .. }
            | MeasurementKind::CameraPoint { feature, .. }
            | MeasurementKind::CameraLine { feature, .. } => *feature = id,
            _ => {}
        }
    }

    /// Full-dimension measurement vector (GPS and 3D points keep z; odometry has 5 rows).
    pub fn to_vector(&self) -> DVector<f64> {
        match self {
            MeasurementKind::Gps(p) => DVector::from_column_slice(p.as_slice()),
            MeasurementKind::Odometry(o) => o.to_vector(),
            MeasurementKind::Point3d { point, .. } => DVector::from_column_slice(point.as_slice()),
            MeasurementKind::CameraPoint { pixel, .. } => DVector::from_column_slice(pixel.as_slice()),
            MeasurementKind::CameraLine { line, .. } => DVector::from_column_slice(line.to_vector().as_slice()),
        }
    }
}

/// A timestamped sensor reading with its noise covariance `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub timestamp: f64,
    pub kind: MeasurementKind,
    pub noise: DMatrix<f64>,
}

impl Measurement {
    pub fn sensor(&self) -> SensorKind {
        self.kind.sensor()
    }

    pub fn validate(&self) -> Result<(), MeasurementError> {
        let n = self.kind.to_vector().len();
        if self.noise.shape() != (n, n) {
            return Err(MeasurementError::Dimension {
                expected: n,
                got: self.noise.nrows(),
            });
        }
        if linalg::asymmetry(&self.noise) > 1e-12 || !linalg::is_spd(&self.noise) {
            return Err(MeasurementError::IndefiniteNoise);
        }
        Ok(())
    }
}

/// Association and sensor geometry needed to predict one measurement.
#[derive(Debug, Clone, Copy)]
pub struct MeasurementContext<'a> {
    pub camera: Option<&'a CameraModel>,
    pub feature: Option<FeatureGeometry>,
    pub params: &'a VehicleParams,
}

/// Row indices the flat variant keeps from a full-dimension measurement.
pub fn kept_rows(variant: Variant, sensor: SensorKind) -> Vec<usize> {
    match (variant, sensor) {
        (Variant::Flat2D, SensorKind::Gps | SensorKind::Point3d) => vec![0, 1],
        (Variant::Flat2D, SensorKind::Odometry) => vec![0, 1, 3],
        (_, SensorKind::Gps | SensorKind::Point3d) => vec![0, 1, 2],
        (_, SensorKind::Odometry) => vec![0, 1, 2, 3, 4],
        (_, SensorKind::CameraPoint | SensorKind::CameraLine) => vec![0, 1],
    }
}

fn select(v: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_iterator(rows.len(), rows.iter().map(|&i| v[i]))
}

fn select_square(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows.len(), |r, c| m[(rows[r], rows[c])])
}

// ---------------------------------------------------------------- GPS

/// Selects the position block: 2×7 for the flat variant, 3×13 for 3D.
pub fn gps_jacobian(variant: Variant) -> DMatrix<f64> {
    let l = variant.layout();
    let mut idx = vec![l.x, l.y];
    idx.extend(l.z);
    let mut h = DMatrix::zeros(idx.len(), l.dim);
    for (r, c) in idx.into_iter().enumerate() {
        h[(r, c)] = 1.0;
    }
    h
}

pub fn gps_predict(variant: Variant, x: &DVector<f64>) -> DVector<f64> {
    gps_jacobian(variant) * x
}

// ---------------------------------------------------------------- odometry

/// Predicted `(v, ϑ̇, α̇, φ, h)`; the flat variant emits `(v, ϑ̇, φ)`.
pub fn odometry_predict(variant: Variant, x: &DVector<f64>, p: &VehicleParams) -> DVector<f64> {
    let l = variant.layout();
    let v = speed(variant, x);
    match (l.pitch_rate, l.c0, l.c1) {
        (Some(ir), Some(i0), Some(i1)) => DVector::from_vec(vec![
            v,
            x[l.yaw_rate],
            x[ir],
            x[l.steer],
            dynamics::vertical_height(x[i0], x[i1], p.preview_distance),
        ]),
        _ => DVector::from_vec(vec![v, x[l.yaw_rate], x[l.steer]]),
    }
}

/// Odometry Jacobian. The speed row is `(ẋ/v, ẏ/v[, ż/v])` and is zeroed
/// below [`V_MIN`]; the height row carries `d²/2` and `d³/6` at the clothoid columns.
pub fn odometry_jacobian(variant: Variant, x: &DVector<f64>, p: &VehicleParams) -> DMatrix<f64> {
    let l = variant.layout();
    let v = speed(variant, x);
    let rows = if l.c0.is_some() { 5 } else { 3 };
    let mut h = DMatrix::zeros(rows, l.dim);
    if v >= V_MIN {
        h[(0, l.vx)] = x[l.vx] / v;
        h[(0, l.vy)] = x[l.vy] / v;
        if let Some(iz) = l.vz {
            h[(0, iz)] = x[iz] / v;
        }
    }
    h[(1, l.yaw_rate)] = 1.0;
    match (l.pitch_rate, l.c0, l.c1) {
        (Some(ir), Some(i0), Some(i1)) => {
            let d = p.preview_distance;
            h[(2, ir)] = 1.0;
            h[(3, l.steer)] = 1.0;
            h[(4, i0)] = d * d / 2.0;
            h[(4, i1)] = d * d * d / 6.0;
        }
        _ => h[(2, l.steer)] = 1.0,
    }
    h
}

// ---------------------------------------------------------------- 3D sensor

/// Landmark in the vehicle frame, `Rᵀ(X − T)`; the flat variant drops z.
pub fn point3d_sensor_predict(variant: Variant, x: &DVector<f64>, landmark: &Vector3<f64>) -> DVector<f64> {
    let q = world_to_vehicle(&pose_of(variant, x), landmark);
    match variant {
        Variant::Flat2D => DVector::from_vec(vec![q.x, q.y]),
        Variant::Full3D => DVector::from_column_slice(q.as_slice()),
    }
}

/// Flat-road 3D-sensor Jacobian in the printed form, with the yaw column
/// written in terms of vehicle position minus landmark position.
pub fn point3d_sensor_jacobian_2d(s: &dynamics::State2D, landmark: &Vector3<f64>) -> nalgebra::SMatrix<f64, 2, 7> {
    let (st, ct) = s.yaw.sin_cos();
    let dx = s.x - landmark.x;
    let dy = s.y - landmark.y;
    let mut h = nalgebra::SMatrix::<f64, 2, 7>::zeros();
    h[(0, 0)] = -ct;
    h[(0, 1)] = -st;
    h[(0, 4)] = st * dx - ct * dy;
    h[(1, 0)] = st;
    h[(1, 1)] = -ct;
    h[(1, 4)] = ct * dx + st * dy;
    h
}

/// Full 3×n derivative of the vehicle-frame point `q = Rᵀ(X − T)` with
/// respect to the state, for either layout (2D rows use z = 0, pitch = 0).
fn vehicle_point_jacobian(variant: Variant, x: &DVector<f64>, landmark: &Vector3<f64>) -> DMatrix<f64> {
    let l = variant.layout();
    let pose = pose_of(variant, x);
    let (sy, cy) = pose.yaw.sin_cos();
    let (sp, cp) = pose.pitch.sin_cos();
    let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(cp, 0.0, -sp, 0.0, 1.0, 0.0, sp, 0.0, cp);
    let drz = Matrix3::new(-sy, -cy, 0.0, cy, -sy, 0.0, 0.0, 0.0, 0.0);
    let dry = Matrix3::new(-sp, 0.0, -cp, 0.0, 0.0, 0.0, cp, 0.0, -sp);
    let r = rz * ry;
    let rel = landmark - pose.position;
    let mut h = DMatrix::zeros(3, l.dim);
    let neg_rt = -r.transpose();
    let mut pos_idx = vec![l.x, l.y];
    pos_idx.extend(l.z);
    for (k, &i) in pos_idx.iter().enumerate() {
        h.set_column(i, &DVector::from_column_slice(neg_rt.column(k).as_slice()));
    }
    let d_yaw = (drz * ry).transpose() * rel;
    h.set_column(l.yaw, &DVector::from_column_slice(d_yaw.as_slice()));
    if let Some(ia) = l.pitch {
        let d_pitch = (rz * dry).transpose() * rel;
        h.set_column(ia, &DVector::from_column_slice(d_pitch.as_slice()));
    }
    h
}

/// Analytic 3D-sensor Jacobian: 2×7 (flat) or 3×13.
pub fn point3d_sensor_jacobian(variant: Variant, x: &DVector<f64>, landmark: &Vector3<f64>) -> DMatrix<f64> {
    match variant {
        Variant::Flat2D => {
            let h = point3d_sensor_jacobian_2d(&dynamics::State2D::from_slice(x.as_slice()), landmark);
            DMatrix::from_column_slice(2, 7, h.as_slice())
        }
        Variant::Full3D => vehicle_point_jacobian(variant, x, landmark),
    }
}

// ---------------------------------------------------------------- camera

/// Pixel of a landmark seen by the vehicle camera.
pub fn point_camera_predict(
    variant: Variant,
    x: &DVector<f64>,
    camera: &CameraModel,
    landmark: &Vector3<f64>,
) -> Result<Vector2<f64>, GeometryError> {
    let p = camera.projection(&pose_of(variant, x));
    project_point(&p, &homogeneous(landmark))
}

/// Chain-rule Jacobian of [`point_camera_predict`].
pub fn point_camera_jacobian(
    variant: Variant,
    x: &DVector<f64>,
    camera: &CameraModel,
    landmark: &Vector3<f64>,
) -> Result<DMatrix<f64>, GeometryError> {
    let pose = pose_of(variant, x);
    let pc = camera.optical_point(&pose, landmark);
    if pc.z <= 0.0 {
        return Err(GeometryError::BehindCamera { depth: pc.z });
    }
    let inv_z = 1.0 / pc.z;
    let dproj = Matrix2x3::new(
        camera.fx * inv_z,
        0.0,
        -camera.fx * pc.x * inv_z * inv_z,
        0.0,
        camera.fy * inv_z,
        -camera.fy * pc.y * inv_z * inv_z,
    );
    // optical = A · R_mountᵀ · (q − t_mount), q = vehicle-frame point
    let a = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
    let chain = dproj * a * camera.mount.rotation().transpose();
    let dq = vehicle_point_jacobian(variant, x, landmark);
    let chain = DMatrix::from_column_slice(2, 3, chain.as_slice());
    Ok(chain * dq)
}

/// Hesse form of the image of the 3D line through `a` and `b`.
pub fn line_camera_predict(
    variant: Variant,
    x: &DVector<f64>,
    camera: &CameraModel,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
) -> Result<HesseLine, GeometryError> {
    let line = plucker_from_points(&homogeneous(a), &homogeneous(b))?;
    let p = camera.projection(&pose_of(variant, x));
    line_to_hesse(&project_line(&p, &line)?)
}

/// Hesse form of the image line through two pixels.
pub fn line_from_pixels(p: &Vector2<f64>, q: &Vector2<f64>) -> Result<HesseLine, GeometryError> {
    let l = Vector3::new(p.x, p.y, 1.0).cross(&Vector3::new(q.x, q.y, 1.0));
    line_to_hesse(&HomogeneousLine2D(l))
}

/// Covariance of [`line_from_pixels`] in `(ρ, γ)` when both endpoints carry
/// isotropic pixel noise of the given variance.
pub fn line_covariance_from_pixels(
    p: &Vector2<f64>,
    q: &Vector2<f64>,
    variance: f64,
) -> Result<Matrix2<f64>, GeometryError> {
    let line = |e: &DVector<f64>| {
        line_from_pixels(&Vector2::new(e[0], e[1]), &Vector2::new(e[2], e[3]))
            .map(|h| DVector::from_vec(vec![h.rho, h.gamma]))
    };
    let e = DVector::from_vec(vec![p.x, p.y, q.x, q.y]);
    line(&e)?;
    let j = linalg::central_jacobian(&e, 1e-4, |s| line(s).unwrap_or_else(|_| DVector::zeros(2)), hesse_diff);
    let c = &j * j.transpose() * variance;
    Ok(Matrix2::new(c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)]))
}

/// Line residual that treats `(ρ, γ)` and `(−ρ, γ + π)` as the same line,
/// so lines passing close to the image origin do not produce π jumps.
fn hesse_diff(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let predicted = HesseLine { rho: b[0], gamma: b[1] };
    let mut r = hesse_residual(&HesseLine { rho: a[0], gamma: a[1] }, &predicted);
    if r.y.abs() > FRAC_PI_2 {
        r = hesse_residual(
            &HesseLine {
                rho: -a[0],
                gamma: wrap_angle(a[1] + PI),
            },
            &predicted,
        );
    }
    DVector::from_vec(vec![r.x, r.y])
}

/// Central-difference Jacobian of [`line_camera_predict`] in `(ρ, γ)` rows.
pub fn line_camera_jacobian(
    variant: Variant,
    x: &DVector<f64>,
    camera: &CameraModel,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    step: f64,
) -> Result<DMatrix<f64>, GeometryError> {
    let mut failure = None;
    let jac = linalg::central_jacobian(
        x,
        step,
        |s| match line_camera_predict(variant, s, camera, a, b) {
            Ok(h) => DVector::from_vec(vec![h.rho, h.gamma]),
            Err(e) => {
                failure.get_or_insert(e);
                DVector::zeros(2)
            }
        },
        hesse_diff,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(jac),
    }
}

// ---------------------------------------------------------------- innovation

/// Predicted measurement tagged with its sensor kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicted {
    pub sensor: SensorKind,
    pub value: DVector<f64>,
}

/// `z − ẑ` with the Hesse angle component wrapped.
pub fn innovation(measured: &Measurement, predicted: &Predicted) -> Result<DVector<f64>, MeasurementError> {
    let sensor = measured.sensor();
    if sensor != predicted.sensor {
        return Err(MeasurementError::KindMismatch {
            measured: sensor,
            predicted: predicted.sensor,
        });
    }
    let full = measured.kind.to_vector();
    let z = if full.len() == predicted.value.len() {
        full
    } else {
        let rows = kept_rows(Variant::Flat2D, sensor);
        if rows.len() != predicted.value.len() {
            return Err(MeasurementError::Dimension {
                expected: full.len(),
                got: predicted.value.len(),
            });
        }
        select(&full, &rows)
    };
    Ok(residual(sensor, &z, &predicted.value))
}

pub fn residual(sensor: SensorKind, z: &DVector<f64>, zhat: &DVector<f64>) -> DVector<f64> {
    match sensor {
        SensorKind::CameraLine => hesse_diff(z, zhat),
        _ => z - zhat,
    }
}

/// Predicted measurement for `variant` at state `x`.
pub fn predict(
    variant: Variant,
    x: &DVector<f64>,
    kind: &MeasurementKind,
    ctx: &MeasurementContext,
) -> Result<Predicted, MeasurementError> {
    let sensor = kind.sensor();
    let value = match sensor {
        SensorKind::Gps => gps_predict(variant, x),
        SensorKind::Odometry => odometry_predict(variant, x, ctx.params),
        SensorKind::Point3d => point3d_sensor_predict(variant, x, &landmark_of(sensor, ctx)?),
        SensorKind::CameraPoint => {
            let px = point_camera_predict(variant, x, camera_of(sensor, ctx)?, &landmark_of(sensor, ctx)?)?;
            DVector::from_column_slice(px.as_slice())
        }
        SensorKind::CameraLine => {
            let (a, b) = segment_of(sensor, ctx)?;
            let h = line_camera_predict(variant, x, camera_of(sensor, ctx)?, &a, &b)?;
            DVector::from_column_slice(h.to_vector().as_slice())
        }
    };
    Ok(Predicted { sensor, value })
}

fn landmark_of(sensor: SensorKind, ctx: &MeasurementContext) -> Result<Vector3<f64>, MeasurementError> {
    match ctx.feature {
        Some(FeatureGeometry::Point(p)) => Ok(p),
        _ => Err(MeasurementError::MissingContext(sensor, "a landmark point")),
    }
}

fn segment_of(sensor: SensorKind, ctx: &MeasurementContext) -> Result<(Vector3<f64>, Vector3<f64>), MeasurementError> {
    match ctx.feature {
        Some(FeatureGeometry::Segment(a, b)) => Ok((a, b)),
        _ => Err(MeasurementError::MissingContext(sensor, "a polyline segment")),
    }
}

fn camera_of<'a>(sensor: SensorKind, ctx: &MeasurementContext<'a>) -> Result<&'a CameraModel, MeasurementError> {
    ctx.camera
        .ok_or(MeasurementError::MissingContext(sensor, "a camera model"))
}

/// Measurement Jacobian for `variant` at state `x`.
pub fn jacobian(
    variant: Variant,
    x: &DVector<f64>,
    kind: &MeasurementKind,
    ctx: &MeasurementContext,
) -> Result<DMatrix<f64>, MeasurementError> {
    let sensor = kind.sensor();
    Ok(match sensor {
        SensorKind::Gps => gps_jacobian(variant),
        SensorKind::Odometry => odometry_jacobian(variant, x, ctx.params),
        SensorKind::Point3d => point3d_sensor_jacobian(variant, x, &landmark_of(sensor, ctx)?),
        SensorKind::CameraPoint => {
            point_camera_jacobian(variant, x, camera_of(sensor, ctx)?, &landmark_of(sensor, ctx)?)?
        }
        SensorKind::CameraLine => {
            let (a, b) = segment_of(sensor, ctx)?;
            line_camera_jacobian(variant, x, camera_of(sensor, ctx)?, &a, &b, FD_STEP)?
        }
    })
}

/// Linearizes a measurement at `x`: innovation, `H` and the matching block of `R`.
pub fn linearize(
    variant: Variant,
    x: &DVector<f64>,
    m: &Measurement,
    ctx: &MeasurementContext,
) -> Result<Linearized, MeasurementError> {
    m.validate()?;
    let predicted = predict(variant, x, &m.kind, ctx)?;
    let innovation = innovation(m, &predicted)?;
    let h = jacobian(variant, x, &m.kind, ctx)?;
    let rows = kept_rows(variant, m.sensor());
    let r = if rows.len() == m.noise.nrows() {
        m.noise.clone()
    } else {
        select_square(&m.noise, &rows)
    };
    Ok(Linearized { innovation, h, r })
}
