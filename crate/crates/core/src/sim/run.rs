//! Filter execution over a simulated stream and the position error metrics.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::scenario::{Init, Scenario};
use super::simulate::{simulate, Simulation, TruthSample, FLOOR_METRIC, FLOOR_PIXEL};
use super::{ScenarioError, DIVERGENCE_LATERAL};
use crate::dynamics::{pose_of, Variant};
use crate::filter::{chi2_threshold, FilterBank, Linearized, StateEstimate, VehicleProcess};
use crate::geometry::{homogeneous, project_point, Pose};
use crate::map::{self, associate, AssociationMode, Candidate, Detection, LineVisibility, Map, VisibleSegment};
use crate::measurement::{
    self, FeatureGeometry, FeatureId, Measurement, MeasurementContext, MeasurementKind, SensorKind,
};
use crate::rng::{NoiseSource, Stream};

/// Diffuse prior variance for `first_gps` initialization.
pub const DIFFUSE_VARIANCE: f64 = 1e6;

/// Fused estimate after every tick (index 0 is the initial estimate).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub variant: Variant,
    pub means: Vec<DVector<f64>>,
    /// Fused covariance after every tick.
    pub covariances: Vec<DMatrix<f64>>,
    pub accepted: usize,
    pub rejected: usize,
}

fn initial_estimate(scn: &Scenario, sim: &Simulation) -> Result<StateEstimate, crate::Error> {
    let variant = scn.variant;
    let l = variant.layout();
    let n = variant.dim();
    match scn.init {
        Init::FirstGps => {
            let fix = sim
                .measurements
                .first()
                .and_then(|ms| {
                    ms.iter().find_map(|m| match m.kind {
                        MeasurementKind::Gps(p) => Some(p),
                        _ => None,
                    })
                })
                .ok_or(ScenarioError::MissingInitialFix)?;
            let mut mean = DVector::zeros(n);
            mean[l.x] = fix.x;
            mean[l.y] = fix.y;
            if let Some(iz) = l.z {
                mean[iz] = fix.z;
            }
            Ok(StateEstimate::new(mean, DMatrix::identity(n, n) * DIFFUSE_VARIANCE)?)
        }
        Init::Truth { sigma } => {
            let mut sd = vec![0.0; n];
            sd[l.x] = sigma.position;
            sd[l.y] = sigma.position;
            sd[l.vx] = sigma.velocity;
            sd[l.vy] = sigma.velocity;
            sd[l.yaw] = sigma.yaw;
            sd[l.yaw_rate] = sigma.yaw_rate;
            sd[l.steer] = sigma.steering;
            let optional = [
                (l.z, sigma.height),
                (l.vz, sigma.velocity),
                (l.pitch, sigma.pitch),
                (l.pitch_rate, sigma.pitch_rate),
                (l.c0, sigma.curvature),
                (l.c1, sigma.curvature_rate),
            ];
            for (idx, s) in optional {
                if let Some(i) = idx {
                    sd[i] = s;
                }
            }
            let z = NoiseSource::new(scn.seed).normals(Stream::Initial, 0, 0, n);
            let truth = sim.truth[0].state_vector(variant);
            let mean = DVector::from_iterator(n, (0..n).map(|i| truth[i] + sd[i] * z[i]));
            let cov = DMatrix::from_diagonal(&DVector::from_iterator(n, sd.iter().map(|s| (s * s).max(FLOOR_METRIC))));
            Ok(StateEstimate::new(mean, cov)?)
        }
    }
}

/// Nominal noise of a candidate landmark at `range`, used for association gates.
fn nominal_point_noise(scn: &Scenario, kind: SensorKind, range: f64) -> DMatrix<f64> {
    let s = &scn.sensors;
    match kind {
        SensorKind::Point3d => DMatrix::identity(3, 3) * s.point3d.variance.max(FLOOR_METRIC),
        _ => {
            let cfg = &s.camera_point;
            DMatrix::identity(2, 2) * (cfg.variance * (range / cfg.reference_range).powi(2)).max(FLOOR_PIXEL)
        }
    }
}

/// Nominal Hesse noise of a visible segment seen from `pose`.
fn nominal_line_noise(scn: &Scenario, pose: &Pose, seg: &VisibleSegment) -> Option<DMatrix<f64>> {
    let proj = scn.camera.projection(pose);
    let pa = project_point(&proj, &homogeneous(&seg.a)).ok()?;
    let pb = project_point(&proj, &homogeneous(&seg.b)).ok()?;
    let c =
        measurement::line_covariance_from_pixels(&pa, &pb, scn.sensors.camera_line.variance.max(FLOOR_PIXEL)).ok()?;
    Some(DMatrix::from_column_slice(2, 2, c.as_slice()))
}

/// Re-associates feature measurements against the map from the estimated pose.
fn associate_nn(scn: &Scenario, map: &Map, prior: &StateEstimate, ms: &[Measurement]) -> Vec<Measurement> {
    let variant = scn.variant;
    let pose = pose_of(variant, &prior.mean);
    let mut out: Vec<Measurement> = ms.iter().filter(|m| m.kind.feature().is_none()).cloned().collect();
    let probability = scn.gating.unwrap_or(0.99);
    for kind in [SensorKind::Point3d, SensorKind::CameraPoint, SensorKind::CameraLine] {
        let group: Vec<&Measurement> = ms.iter().filter(|m| m.sensor() == kind).collect();
        if group.is_empty() {
            continue;
        }
        let features: Vec<(FeatureId, FeatureGeometry, DMatrix<f64>)> = match kind {
            SensorKind::Point3d => map::visible_landmarks(map, &pose, &scn.sensors.point3d.spec)
                .into_iter()
                .map(|(id, p)| {
                    (
                        FeatureId::Landmark(id),
                        FeatureGeometry::Point(p),
                        nominal_point_noise(scn, kind, 0.0),
                    )
                })
                .collect(),
            SensorKind::CameraPoint => {
                map::visible_landmarks_camera(map, &pose, &scn.camera, scn.sensors.camera_point.max_range)
                    .into_iter()
                    .map(|(id, p)| {
                        let r = scn.camera.optical_point(&pose, &p).norm();
                        (
                            FeatureId::Landmark(id),
                            FeatureGeometry::Point(p),
                            nominal_point_noise(scn, kind, r),
                        )
                    })
                    .collect()
            }
            _ => {
                let vis = LineVisibility {
                    max_range: scn.sensors.camera_line.max_range,
                    min_length_px: scn.sensors.camera_line.min_length_px,
                };
                map::visible_segments(map, &pose, &scn.camera, &vis)
                    .into_iter()
                    .filter_map(|s| {
                        Some((
                            s.id,
                            FeatureGeometry::Segment(s.a, s.b),
                            nominal_line_noise(scn, &pose, &s)?,
                        ))
                    })
                    .collect()
            }
        };
        let candidates: Vec<Candidate> = features
            .into_iter()
            .filter_map(|(id, geom, r)| {
                let ctx = MeasurementContext {
                    camera: Some(&scn.camera),
                    feature: Some(geom),
                    params: &scn.vehicle,
                };
                let probe = group[0].kind.clone();
                let predicted = measurement::predict(variant, &prior.mean, &probe, &ctx).ok()?;
                let h = measurement::jacobian(variant, &prior.mean, &probe, &ctx).ok()?;
                let rows = measurement::kept_rows(variant, kind);
                let r = DMatrix::from_fn(rows.len(), rows.len(), |i, j| r[(rows[i], rows[j])]);
                Some(Candidate {
                    id,
                    innovation_cov: &h * &prior.covariance * h.transpose() + r,
                    predicted: predicted.value,
                })
            })
            .collect();
        let detections: Vec<Detection> = group
            .iter()
            .map(|m| {
                let full = m.kind.to_vector();
                let rows = measurement::kept_rows(variant, kind);
                Detection {
                    sensor: kind,
                    value: DVector::from_iterator(rows.len(), rows.iter().map(|&i| full[i])),
                    truth: m.kind.feature(),
                }
            })
            .collect();
        let threshold = chi2_threshold(measurement::kept_rows(variant, kind).len(), probability);
        for (i, id) in associate(&detections, &candidates, AssociationMode::NearestNeighbor, threshold) {
            let mut m = group[i].clone();
            m.kind.set_feature(id);
            out.push(m);
        }
    }
    out
}

/// Runs the filter bank over a simulated stream: per tick predict, route
/// measurements to local filters, fuse and feed back.
pub fn run_filter(scn: &Scenario, map: &Map, sim: &Simulation) -> Result<FilterRun, crate::Error> {
    let variant = scn.variant;
    let init = initial_estimate(scn, sim)?;
    let process = VehicleProcess {
        variant,
        params: scn.vehicle,
        noise: scn.process_noise(),
    };
    let mut bank = FilterBank::per_sensor(init, Box::new(process))?.with_gating(scn.gating);
    let mut means = vec![bank.master().mean.clone()];
    let mut covariances = vec![bank.master().covariance.clone()];
    let (mut accepted, mut rejected) = (0, 0);
    for ms in sim.measurements.iter().skip(1) {
        bank.predict(scn.dt)?;
        let prior = bank.master().clone();
        let associated;
        let ms = match scn.association {
            AssociationMode::Oracle => ms.as_slice(),
            AssociationMode::NearestNeighbor => {
                associated = associate_nn(scn, map, &prior, ms);
                rejected += ms.len() - associated.len();
                associated.as_slice()
            }
        };
        let mut lins: Vec<(SensorKind, Linearized)> = Vec::with_capacity(ms.len());
        for m in ms {
            let feature = match m.kind.feature() {
                Some(id) => match map.feature(id) {
                    Some(g) => Some(g),
                    None => {
                        rejected += 1;
                        continue;
                    }
                },
                None => None,
            };
            let ctx = MeasurementContext {
                camera: Some(&scn.camera),
                feature,
                params: &scn.vehicle,
            };
            match measurement::linearize(variant, &prior.mean, m, &ctx) {
                Ok(lin) => lins.push((m.sensor(), lin)),
                Err(measurement::MeasurementError::Geometry(_)) => rejected += 1,
                Err(e) => return Err(e.into()),
            }
        }
        let report = bank.update(&lins)?;
        accepted += report.accepted;
        rejected += report.rejected;
        means.push(bank.master().mean.clone());
        covariances.push(bank.master().covariance.clone());
    }
    Ok(FilterRun {
        variant,
        means,
        covariances,
        accepted,
        rejected,
    })
}

/// One row of the per-tick output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TickRecord {
    pub t: f64,
    pub truth_x: f64,
    pub truth_y: f64,
    pub truth_z: f64,
    pub truth_yaw: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_z: f64,
    pub est_yaw: f64,
    pub lat_err: f64,
    pub long_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Summary {
    pub ticks: usize,
    pub mean_abs_lateral: f64,
    pub mean_abs_longitudinal: f64,
    pub max_abs_lateral: f64,
    pub max_abs_longitudinal: f64,
    pub mean_position_error: f64,
    pub final_position_error: f64,
    pub diverged: bool,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub records: Vec<TickRecord>,
    pub summary: Summary,
}

/// Lateral and longitudinal errors in the truth-heading frame. `truth` and
/// `estimates` are aligned tick by tick.
pub fn metrics(truth: &[TruthSample], estimates: &[Pose]) -> Result<RunResult, ScenarioError> {
    if truth.len() != estimates.len() {
        return Err(ScenarioError::LengthMismatch {
            truth: truth.len(),
            estimate: estimates.len(),
        });
    }
    let records: Vec<TickRecord> = truth
        .iter()
        .zip(estimates)
        .map(|(ts, est)| {
            let s = &ts.state;
            let (ex, ey) = (est.position.x - s.x, est.position.y - s.y);
            let (sy, cy) = s.yaw.sin_cos();
            TickRecord {
                t: ts.t,
                truth_x: s.x,
                truth_y: s.y,
                truth_z: s.z,
                truth_yaw: s.yaw,
                est_x: est.position.x,
                est_y: est.position.y,
                est_z: est.position.z,
                est_yaw: est.yaw,
                lat_err: -sy * ex + cy * ey,
                long_err: cy * ex + sy * ey,
            }
        })
        .collect();
    let n = records.len().max(1) as f64;
    let mean = |f: &dyn Fn(&TickRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let max = |f: &dyn Fn(&TickRecord) -> f64| records.iter().map(f).fold(0.0, f64::max);
    let summary = Summary {
        ticks: records.len(),
        mean_abs_lateral: mean(&|r| r.lat_err.abs()),
        mean_abs_longitudinal: mean(&|r| r.long_err.abs()),
        max_abs_lateral: max(&|r| r.lat_err.abs()),
        max_abs_longitudinal: max(&|r| r.long_err.abs()),
        mean_position_error: mean(&|r| r.lat_err.hypot(r.long_err)),
        final_position_error: records.last().map_or(0.0, |r| r.lat_err.hypot(r.long_err)),
        diverged: records.iter().any(|r| !(r.lat_err.abs() <= DIVERGENCE_LATERAL)),
        accepted: 0,
        rejected: 0,
    };
    Ok(RunResult { records, summary })
}

/// Metrics of a filter run against its simulation (tick 0 excluded).
pub fn evaluate(sim: &Simulation, run: &FilterRun) -> Result<RunResult, ScenarioError> {
    let poses: Vec<Pose> = run.means.iter().skip(1).map(|m| pose_of(run.variant, m)).collect();
    let mut result = metrics(&sim.truth[1..], &poses)?;
    result.summary.accepted = run.accepted;
    result.summary.rejected = run.rejected;
    Ok(result)
}

/// Simulate, filter and score one scenario.
pub fn run_scenario(scn: &Scenario, map: &Map) -> Result<RunResult, crate::Error> {
    let sim = simulate(scn, map)?;
    let run = run_filter(scn, map, &sim)?;
    Ok(evaluate(&sim, &run)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::State3D;
    use crate::map::VerticalProfile;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;
    use std::f64::consts::FRAC_PI_2;

    fn truth(yaw: f64) -> TruthSample {
        TruthSample {
            t: 0.0,
            state: State3D {
                yaw,
                ..Default::default()
            },
            profile: VerticalProfile::default(),
            speed: 0.0,
        }
    }

    #[test]
    fn metric_examples() {
        let r = metrics(&[truth(0.0)], &[Pose::default()]).unwrap();
        assert_eq!((r.records[0].lat_err, r.records[0].long_err), (0.0, 0.0));
        let r = metrics(&[truth(0.0)], &[Pose::new(Vector3::new(0.0, 0.5, 0.0), 0.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(r.records[0].lat_err, 0.5);
        assert_abs_diff_eq!(r.records[0].long_err, 0.0);
        let r = metrics(&[truth(FRAC_PI_2)], &[Pose::new(Vector3::new(0.3, 0.0, 0.0), 0.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(r.records[0].lat_err, -0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(r.records[0].long_err, 0.0, epsilon = 1e-15);
        assert!(matches!(
            metrics(&[truth(0.0)], &[]),
            Err(ScenarioError::LengthMismatch { .. })
        ));
    }
}
