//! Ground truth and noisy measurement generation.

use nalgebra::{DMatrix, DVector, Vector2, Vector3};

use super::scenario::Scenario;
use super::ScenarioError;
use crate::dynamics::{State2D, State3D, Variant};
use crate::geometry::{homogeneous, project_point, world_to_vehicle, Pose};
use crate::map::{self, local_vertical_profile, LineVisibility, Map, VerticalProfile};
use crate::measurement::{
    line_covariance_from_pixels, line_from_pixels, FeatureId, Measurement, MeasurementKind, OdometryBundle,
};
use crate::rng::{NoiseSource, Stream};

/// Smallest variances used for `R` so zero-noise runs stay well posed.
pub const FLOOR_METRIC: f64 = 1e-8;
pub const FLOOR_PIXEL: f64 = 1e-6;

const SUBSTEPS: usize = 10;

/// Polyline id, segment index and clipped endpoints of a visible segment.
type SegmentKey = (u32, u32, Vector3<f64>, Vector3<f64>);

/// Ground truth at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub state: State3D,
    pub profile: VerticalProfile,
    /// Speed along the road surface (m/s).
    pub speed: f64,
}

impl TruthSample {
    pub fn pose(&self) -> Pose {
        let s = &self.state;
        Pose::new(Vector3::new(s.x, s.y, s.z), s.yaw, s.pitch)
    }

    /// Truth in the state layout of `variant`.
    pub fn state_vector(&self, variant: Variant) -> DVector<f64> {
        let s = &self.state;
        match variant {
            Variant::Full3D => DVector::from_column_slice(s.to_vector().as_slice()),
            Variant::Flat2D => DVector::from_column_slice(
                State2D {
                    x: s.x,
                    y: s.y,
                    vx: s.vx,
                    vy: s.vy,
                    yaw: s.yaw,
                    yaw_rate: s.yaw_rate,
                    steer: s.steer,
                }
                .to_vector()
                .as_slice(),
            ),
        }
    }
}

/// Ground truth plus the measurements emitted at every tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub truth: Vec<TruthSample>,
    pub measurements: Vec<Vec<Measurement>>,
}

fn control_at(scn: &Scenario, t: f64) -> (f64, f64) {
    let idx = scn.controls.partition_point(|c| c.t <= t + 1e-9);
    let c = scn.controls[idx.saturating_sub(1)];
    (c.speed, c.steering)
}

fn sample(scn: &Scenario, map: &Map, t: f64, x: f64, y: f64, yaw: f64) -> Result<TruthSample, ScenarioError> {
    let (v, steer) = control_at(scn, t);
    let profile =
        local_vertical_profile(map, &Vector3::new(x, y, 0.0), yaw, scn.vehicle.preview_distance).map_err(|e| {
            ScenarioError::OffMap {
                t,
                message: e.to_string(),
            }
        })?;
    let pitch = profile.pitch();
    let (sa, ca) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    Ok(TruthSample {
        t,
        speed: v,
        profile,
        state: State3D {
            x,
            y,
            z: profile.z,
            vx: v * ca * cy,
            vy: v * ca * sy,
            vz: v * sa,
            yaw,
            yaw_rate: v / scn.vehicle.wheelbase * steer.tan(),
            pitch,
            pitch_rate: profile.c0 * v,
            steer,
            c0: profile.c0,
            c1: profile.c1,
        },
    })
}

/// Integrates the horizontal bicycle model with RK4 at `dt/10` substeps;
/// height and pitch follow the map surface.
pub fn simulate_truth(scn: &Scenario, map: &Map) -> Result<Vec<TruthSample>, ScenarioError> {
    let n = scn.ticks();
    let h = scn.dt / SUBSTEPS as f64;
    let wheelbase = scn.vehicle.wheelbase;
    let (mut x, mut y, mut yaw) = (scn.start.x, scn.start.y, scn.start.yaw);
    let mut out = Vec::with_capacity(n + 1);
    out.push(sample(scn, map, 0.0, x, y, yaw)?);
    for k in 1..=n {
        let cos_pitch = out[k - 1].state.pitch.cos();
        let t0 = (k - 1) as f64 * scn.dt;
        for j in 0..SUBSTEPS {
            let (v, steer) = control_at(scn, t0 + j as f64 * h);
            let vh = v * cos_pitch;
            let w = v / wheelbase * steer.tan();
            let f = |th: f64| (vh * th.cos(), vh * th.sin());
            let k1 = f(yaw);
            let k2 = f(yaw + w * h / 2.0);
            let k3 = k2;
            let k4 = f(yaw + w * h);
            x += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            y += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            yaw += w * h;
        }
        yaw = crate::geometry::wrap_angle(yaw);
        out.push(sample(scn, map, k as f64 * scn.dt, x, y, yaw)?);
    }
    Ok(out)
}

fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(values))
}

fn segment_key(polyline: u32, index: u32) -> u32 {
    (polyline << 20) | (index & 0xF_FFFF)
}

/// Nearest `cap` features by range, then ordered by id for a stable stream.
fn nearest<T: Copy>(mut items: Vec<(u32, T, f64)>, cap: Option<usize>) -> Vec<(u32, T, f64)> {
    if let Some(cap) = cap {
        items.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
        items.truncate(cap);
    }
    items.sort_by_key(|i| i.0);
    items
}

/// Measurements for every tick of `truth`.
pub fn simulate_measurements(scn: &Scenario, map: &Map, truth: &[TruthSample]) -> Vec<Vec<Measurement>> {
    let noise = NoiseSource::new(scn.seed);
    let s = &scn.sensors;
    let cam = &scn.camera;
    let line_vis = LineVisibility {
        max_range: s.camera_line.max_range,
        min_length_px: s.camera_line.min_length_px,
    };
    let periods: Vec<usize> = crate::measurement::SensorKind::ALL
        .iter()
        .map(|k| scn.period(*k))
        .collect();
    let due = |kind: crate::measurement::SensorKind, k: usize| {
        let i = crate::measurement::SensorKind::ALL
            .iter()
            .position(|x| *x == kind)
            .unwrap();
        scn.sensors.enabled(kind) && k.is_multiple_of(periods[i])
    };
    use crate::measurement::SensorKind as K;

    truth
        .iter()
        .enumerate()
        .map(|(k, ts)| {
            let tick = k as u64;
            let t = ts.t;
            let pose = ts.pose();
            let st = &ts.state;
            let mut out = Vec::new();

            if due(K::Gps, k) {
                let sd = s.gps.variance.sqrt();
                let n = noise.normals(Stream::Gps, 0, tick, 3);
                out.push(Measurement {
                    timestamp: t,
                    kind: MeasurementKind::Gps(Vector3::new(st.x + sd * n[0], st.y + sd * n[1], st.z + sd * n[2])),
                    noise: DMatrix::identity(3, 3) * s.gps.variance.max(FLOOR_METRIC),
                });
            }

            if due(K::Odometry, k) {
                let var = s.odometry.variance;
                let n = noise.normals(Stream::Odometry, 0, tick, 5);
                let e = |i: usize| var[i].sqrt() * n[i];
                out.push(Measurement {
                    timestamp: t,
                    kind: MeasurementKind::Odometry(OdometryBundle {
                        speed: ts.speed + e(0),
                        yaw_rate: st.yaw_rate + e(1),
                        pitch_rate: st.pitch_rate + e(2),
                        steering: st.steer + e(3),
                        height: ts.profile.height_at_d + e(4),
                    }),
                    noise: diag(&var.map(|v| v.max(FLOOR_METRIC))),
                });
            }

            if due(K::Point3d, k) {
                let spec = &s.point3d.spec;
                let seen: Vec<(u32, Vector3<f64>, f64)> = map::visible_landmarks(map, &pose, spec)
                    .into_iter()
                    .map(|(id, p)| {
                        let q = world_to_vehicle(&pose, &p);
                        (id, q, (q - spec.mount.position).norm())
                    })
                    .collect();
                let sd = s.point3d.variance.sqrt();
                for (id, q, _) in nearest(seen, scn.feature_cap) {
                    let n = noise.normals(Stream::Point3d, id, tick, 3);
                    out.push(Measurement {
                        timestamp: t,
                        kind: MeasurementKind::Point3d {
                            feature: FeatureId::Landmark(id),
                            point: q + Vector3::new(n[0], n[1], n[2]) * sd,
                        },
                        noise: DMatrix::identity(3, 3) * s.point3d.variance.max(FLOOR_METRIC),
                    });
                }
            }

            if due(K::CameraPoint, k) {
                let cfg = &s.camera_point;
                let proj = cam.projection(&pose);
                let seen: Vec<(u32, Vector2<f64>, f64)> = map::visible_landmarks_camera(map, &pose, cam, cfg.max_range)
                    .into_iter()
                    .filter_map(|(id, p)| {
                        let px = project_point(&proj, &homogeneous(&p)).ok()?;
                        Some((id, px, cam.optical_point(&pose, &p).norm()))
                    })
                    .collect();
                for (id, px, range) in nearest(seen, scn.feature_cap) {
                    let var = cfg.variance * (range / cfg.reference_range).powi(2);
                    let n = noise.normals(Stream::CameraPoint, id, tick, 2);
                    out.push(Measurement {
                        timestamp: t,
                        kind: MeasurementKind::CameraPoint {
                            feature: FeatureId::Landmark(id),
                            pixel: px + Vector2::new(n[0], n[1]) * var.sqrt(),
                        },
                        noise: DMatrix::identity(2, 2) * var.max(FLOOR_PIXEL),
                    });
                }
            }

            if due(K::CameraLine, k) {
                let cfg = &s.camera_line;
                let proj = cam.projection(&pose);
                let sd = cfg.variance.sqrt();
                let seen: Vec<(u32, SegmentKey, f64)> = map::visible_segments(map, &pose, cam, &line_vis)
                    .into_iter()
                    .filter_map(|seg| {
                        let FeatureId::Segment { polyline, index } = seg.id else {
                            return None;
                        };
                        let range = cam
                            .optical_point(&pose, &seg.a)
                            .norm()
                            .min(cam.optical_point(&pose, &seg.b).norm());
                        Some((segment_key(polyline, index), (polyline, index, seg.a, seg.b), range))
                    })
                    .collect();
                for (_, (polyline, index, a, b), _) in nearest(seen, scn.feature_cap) {
                    let seg = map::VisibleSegment {
                        id: FeatureId::Segment { polyline, index },
                        a,
                        b,
                    };
                    let (Ok(pa), Ok(pb)) = (
                        project_point(&proj, &homogeneous(&seg.a)),
                        project_point(&proj, &homogeneous(&seg.b)),
                    ) else {
                        continue;
                    };
                    let n = noise.normals(Stream::CameraLine, segment_key(polyline, index), tick, 4);
                    let pa = pa + Vector2::new(n[0], n[1]) * sd;
                    let pb = pb + Vector2::new(n[2], n[3]) * sd;
                    let (Ok(line), Ok(cov)) = (
                        line_from_pixels(&pa, &pb),
                        line_covariance_from_pixels(&pa, &pb, cfg.variance.max(FLOOR_PIXEL)),
                    ) else {
                        continue;
                    };
                    out.push(Measurement {
                        timestamp: t,
                        kind: MeasurementKind::CameraLine { feature: seg.id, line },
                        noise: DMatrix::from_column_slice(2, 2, cov.as_slice()),
                    });
                }
            }
            out
        })
        .collect()
}

/// Truth trajectory and measurement stream of a scenario.
pub fn simulate(scn: &Scenario, map: &Map) -> Result<Simulation, ScenarioError> {
    let truth = simulate_truth(scn, map)?;
    let measurements = simulate_measurements(scn, map, &truth);
    Ok(Simulation { truth, measurements })
}
