//! Lane-level map: landmarks and 3D polylines, visibility queries, local
//! road geometry and data association.
//!
//! # File format
//!
//! A single JSON document, coordinates in meters in a right-handed world
//! frame with z up. Unknown fields are rejected.
//!
//! ```json
//! {
//!   "landmarks": [ { "id": 1, "position": [12.0, 5.0, 2.5] } ],
//!   "polylines": [
//!     { "id": 10, "role": "left_boundary", "closed": false,
//!       "points": [[0.0, 1.75, 0.0], [5.0, 1.75, 0.0]] }
//!   ]
//! }
//! ```
//!
//! `role` is one of `center`, `left_boundary`, `right_boundary`, `other`.
//! `closed` defaults to `false`; a closed polyline has an implicit segment
//! from its last point back to its first.

pub mod synth;

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{world_to_vehicle, CameraModel, Pose};
use crate::linalg;
use crate::measurement::{residual, FeatureGeometry, FeatureId, SensorKind};

/// Depth of the camera near plane used for segment clipping (m).
pub const NEAR_PLANE: f64 = 0.1;
/// Largest horizontal distance from a polyline that still counts as on the map (m).
pub const LATERAL_BOUND: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("map parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid map at {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("cannot access map file {path}: {message}")]
    Io { path: String, message: String },
    #[error("position ({x:.2}, {y:.2}) is more than {LATERAL_BOUND} m from every polyline")]
    OffMap { x: f64, y: f64 },
    #[error("invalid sensor spec: {0}")]
    InvalidSensor(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Landmark {
    pub id: u32,
    pub position: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneRole {
    Center,
    LeftBoundary,
    RightBoundary,
    Other,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Polyline {
    pub id: u32,
    pub role: LaneRole,
    #[serde(default, skip_serializing_if = "is_false")]
    pub closed: bool,
    pub points: Vec<Vector3<f64>>,
}

impl Polyline {
    pub fn segment_count(&self) -> usize {
        if self.closed {
            self.points.len()
        } else {
            self.points.len() - 1
        }
    }

    pub fn segment(&self, index: usize) -> Option<(Vector3<f64>, Vector3<f64>)> {
        if index >= self.segment_count() {
            return None;
        }
        let n = self.points.len();
        Some((self.points[index], self.points[(index + 1) % n]))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Map {
    #[serde(default)]
    pub landmarks: Vec<Landmark>,
    #[serde(default)]
    pub polylines: Vec<Polyline>,
}

fn invalid(field: String, message: impl Into<String>) -> MapError {
    MapError::Invalid {
        field,
        message: message.into(),
    }
}

impl Map {
    pub fn validate(&self) -> Result<(), MapError> {
        let mut ids = HashSet::new();
        for (i, lm) in self.landmarks.iter().enumerate() {
            if !ids.insert(lm.id) {
                return Err(invalid(
                    format!("landmarks[{i}].id"),
                    format!("duplicate landmark id {}", lm.id),
                ));
            }
            if lm.position.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("landmarks[{i}].position"), "non-finite coordinate"));
            }
        }
        let mut ids = HashSet::new();
        for (i, pl) in self.polylines.iter().enumerate() {
            if !ids.insert(pl.id) {
                return Err(invalid(
                    format!("polylines[{i}].id"),
                    format!("duplicate polyline id {}", pl.id),
                ));
            }
            let min = if pl.closed { 3 } else { 2 };
            if pl.points.len() < min {
                return Err(invalid(
                    format!("polylines[{i}].points"),
                    format!("needs at least {min} shape points, has {}", pl.points.len()),
                ));
            }
            for (j, p) in pl.points.iter().enumerate() {
                if p.iter().any(|v| !v.is_finite()) {
                    return Err(invalid(format!("polylines[{i}].points[{j}]"), "non-finite coordinate"));
                }
            }
            for k in 0..pl.segment_count() {
                let (a, b) = pl.segment(k).expect("index in range");
                if a == b {
                    return Err(invalid(
                        format!("polylines[{i}].points[{}]", (k + 1) % pl.points.len()),
                        "repeats the previous shape point",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, MapError> {
        let map: Map = serde_json::from_str(text).map_err(|e| MapError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        map.validate()?;
        Ok(map)
    }

    /// Canonical serialization: pretty JSON in field order with a trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("map serializes");
        s.push('\n');
        s
    }

    pub fn landmark(&self, id: u32) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.id == id)
    }

    pub fn polyline(&self, id: u32) -> Option<&Polyline> {
        self.polylines.iter().find(|p| p.id == id)
    }

    /// World geometry of a feature id, if it resolves in this map.
    pub fn feature(&self, id: FeatureId) -> Option<FeatureGeometry> {
        match id {
            FeatureId::Landmark(i) => self.landmark(i).map(|l| FeatureGeometry::Point(l.position)),
            FeatureId::Segment { polyline, index } => self
                .polyline(polyline)?
                .segment(index as usize)
                .map(|(a, b)| FeatureGeometry::Segment(a, b)),
        }
    }
}

pub fn load_map(path: &Path) -> Result<Map, MapError> {
    let text = std::fs::read_to_string(path).map_err(|e| MapError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Map::from_json_str(&text)
}

/// Writes the canonical form atomically.
pub fn save_map(map: &Map, path: &Path) -> Result<(), MapError> {
    crate::sim::output::write_atomic(path, map.to_canonical_json().as_bytes()).map_err(|e| MapError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Range and field of view of a sensor mounted on the vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub max_range: f64,
    pub h_fov: f64,
    pub v_fov: f64,
    #[serde(default)]
    pub mount: Pose,
}

impl SensorSpec {
    pub fn validate(&self) -> Result<(), MapError> {
        if !(self.max_range > 0.0) {
            return Err(MapError::InvalidSensor(format!(
                "max_range {} must be positive",
                self.max_range
            )));
        }
        for (name, fov) in [("h_fov", self.h_fov), ("v_fov", self.v_fov)] {
            if !(fov > 0.0 && fov <= std::f64::consts::PI) {
                return Err(MapError::InvalidSensor(format!("{name} {fov} outside (0, pi]")));
            }
        }
        Ok(())
    }

    /// Whether a point given in the vehicle frame is inside range and field of view.
    pub fn sees(&self, p_vehicle: &Vector3<f64>) -> bool {
        let p = world_to_vehicle(&self.mount, p_vehicle);
        let range = p.norm();
        if range > self.max_range || range == 0.0 {
            return false;
        }
        let azimuth = p.y.atan2(p.x);
        let elevation = p.z.atan2(p.x.hypot(p.y));
        azimuth.abs() <= self.h_fov / 2.0 && elevation.abs() <= self.v_fov / 2.0
    }
}

/// Landmarks inside the sensor's range and field of view, ordered by id.
pub fn visible_landmarks(map: &Map, vehicle: &Pose, spec: &SensorSpec) -> Vec<(u32, Vector3<f64>)> {
    let mut out: Vec<_> = map
        .landmarks
        .iter()
        .filter(|l| spec.sees(&world_to_vehicle(vehicle, &l.position)))
        .map(|l| (l.id, l.position))
        .collect();
    out.sort_by_key(|(id, _)| *id);
    out
}

/// Landmarks whose projection falls inside the image within `max_range`, ordered by id.
pub fn visible_landmarks_camera(
    map: &Map,
    vehicle: &Pose,
    camera: &CameraModel,
    max_range: f64,
) -> Vec<(u32, Vector3<f64>)> {
    let proj = camera.projection(vehicle);
    let mut out: Vec<_> = map
        .landmarks
        .iter()
        .filter(|l| {
            let pc = camera.optical_point(vehicle, &l.position);
            pc.z >= NEAR_PLANE
                && pc.norm() <= max_range
                && crate::geometry::project_point(&proj, &crate::geometry::homogeneous(&l.position))
                    .map(|px| camera.in_image(&px))
                    .unwrap_or(false)
        })
        .map(|l| (l.id, l.position))
        .collect();
    out.sort_by_key(|(id, _)| *id);
    out
}

/// Limits of the camera line detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineVisibility {
    /// Farthest depth a segment is detected at (m).
    pub max_range: f64,
    /// Shortest projected length of a clipped segment (px).
    pub min_length_px: f64,
}

/// A polyline segment clipped to the camera view frustum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibleSegment {
    pub id: FeatureId,
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
}

/// Clips the segment `pa → pb` (optical frame) to half-spaces `n·p + c ≥ 0`,
/// returning the surviving parameter interval.
fn clip_interval(pa: &Vector3<f64>, pb: &Vector3<f64>, planes: &[(Vector3<f64>, f64)]) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
    for (n, c) in planes {
        let ga = n.dot(pa) + c;
        let gb = n.dot(pb) + c;
        if ga < 0.0 && gb < 0.0 {
            return None;
        }
        if ga < 0.0 {
            t0 = t0.max(ga / (ga - gb));
        } else if gb < 0.0 {
            t1 = t1.min(ga / (ga - gb));
        }
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

/// Polyline segments seen by the camera, clipped to the view frustum
/// (near plane at [`NEAR_PLANE`], image borders, far plane at `max_range`).
/// Ordered by polyline id then segment index.
pub fn visible_segments(map: &Map, vehicle: &Pose, camera: &CameraModel, vis: &LineVisibility) -> Vec<VisibleSegment> {
    let (fx, fy, cx, cy, w, h) = (camera.fx, camera.fy, camera.cx, camera.cy, camera.width, camera.height);
    let planes = [
        (Vector3::new(0.0, 0.0, 1.0), -NEAR_PLANE),
        (Vector3::new(0.0, 0.0, -1.0), vis.max_range),
        (Vector3::new(fx, 0.0, cx), 0.0),
        (Vector3::new(-fx, 0.0, w - cx), 0.0),
        (Vector3::new(0.0, fy, cy), 0.0),
        (Vector3::new(0.0, -fy, h - cy), 0.0),
    ];
    let (r, c) = camera.world_to_optical(vehicle);
    let pixel = |p: &Vector3<f64>| Vector2::new(fx * p.x / p.z + cx, fy * p.y / p.z + cy);
    // the lane center is a map construct, not a painted marking
    let mut polylines: Vec<&Polyline> = map.polylines.iter().filter(|p| p.role != LaneRole::Center).collect();
    polylines.sort_by_key(|p| p.id);
    let mut out = Vec::new();
    for pl in polylines {
        for k in 0..pl.segment_count() {
            let (a, b) = pl.segment(k).expect("index in range");
            let pa = r * (a - c);
            let pb = r * (b - c);
            let Some((t0, t1)) = clip_interval(&pa, &pb, &planes) else {
                continue;
            };
            let (ca, cb) = (pa + (pb - pa) * t0, pa + (pb - pa) * t1);
            if (pixel(&ca) - pixel(&cb)).norm() < vis.min_length_px {
                continue;
            }
            out.push(VisibleSegment {
                id: FeatureId::Segment {
                    polyline: pl.id,
                    index: k as u32,
                },
                a: a + (b - a) * t0,
                b: a + (b - a) * t1,
            });
        }
    }
    out
}

/// Road height polynomial around a point, in horizontal arc length `l`
/// along the direction of travel: `z(l) = z + slope·l + C₀l²/2 + C₁l³/6`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VerticalProfile {
    pub z: f64,
    pub slope: f64,
    pub c0: f64,
    pub c1: f64,
    /// Interpolated road height at the preview distance, relative to the tangent line.
    pub height_at_d: f64,
}

impl VerticalProfile {
    pub fn pitch(&self) -> f64 {
        self.slope.atan()
    }
}

struct Nearest<'a> {
    polyline: &'a Polyline,
    segment: usize,
    t: f64,
    distance: f64,
}

fn nearest_on<'a>(pl: &'a Polyline, p: &Vector2<f64>) -> Option<Nearest<'a>> {
    let mut best: Option<Nearest> = None;
    for k in 0..pl.segment_count() {
        let (a, b) = pl.segment(k).expect("index in range");
        let (a2, b2) = (a.xy(), b.xy());
        let ab = b2 - a2;
        let len2 = ab.norm_squared();
        let t = if len2 > 0.0 {
            ((p - a2).dot(&ab) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let distance = (a2 + ab * t - p).norm();
        if best.as_ref().is_none_or(|b| distance < b.distance) {
            best = Some(Nearest {
                polyline: pl,
                segment: k,
                t,
                distance,
            });
        }
    }
    best
}

/// Least-squares clothoid fit of the road height ahead of `position`.
///
/// Uses the nearest center-line polyline within [`LATERAL_BOUND`] (any role
/// if no center line is that close) and its shape points from the one just
/// behind the vehicle up to `2d` ahead, measured in horizontal arc length.
pub fn local_vertical_profile(
    map: &Map,
    position: &Vector3<f64>,
    heading: f64,
    d: f64,
) -> Result<VerticalProfile, MapError> {
    let p = position.xy();
    let candidates = |role: Option<LaneRole>| {
        map.polylines
            .iter()
            .filter(move |pl| role.is_none_or(|r| pl.role == r))
            .filter_map(|pl| nearest_on(pl, &p))
            .filter(|n| n.distance <= LATERAL_BOUND)
            .min_by(|a, b| a.distance.total_cmp(&b.distance))
    };
    let near = candidates(Some(LaneRole::Center))
        .or_else(|| candidates(None))
        .ok_or(MapError::OffMap { x: p.x, y: p.y })?;
    let pl = near.polyline;
    let n = pl.points.len();
    let (a, b) = pl.segment(near.segment).expect("index in range");
    let foot = a + (b - a) * near.t;
    let dir = Vector2::new(heading.cos(), heading.sin());
    let forward = (b - a).xy().dot(&dir) >= 0.0;

    // walk shape points in the direction of travel
    let step = |i: usize, fwd: bool| -> Option<usize> {
        match (fwd, pl.closed) {
            (true, true) => Some((i + 1) % n),
            (false, true) => Some((i + n - 1) % n),
            (true, false) => (i + 1 < n).then_some(i + 1),
            (false, false) => i.checked_sub(1),
        }
    };
    let (ahead0, behind0) = if forward {
        (near.segment + 1, near.segment)
    } else {
        (near.segment, near.segment + 1)
    };
    let (ahead0, behind0) = (ahead0 % n, behind0 % n);
    let horizon = 2.0 * d;
    let mut samples: Vec<(f64, f64)> = vec![(-(pl.points[behind0] - foot).xy().norm(), pl.points[behind0].z)];
    let mut prev = foot;
    let mut l = 0.0;
    let mut idx = Some(ahead0);
    let mut visited = 0;
    while let Some(i) = idx {
        let q = pl.points[i];
        l += (q - prev).xy().norm();
        samples.push((l, q.z));
        if l > horizon || visited > n {
            break;
        }
        prev = q;
        visited += 1;
        idx = step(i, forward);
    }

    // height interpolated linearly along arc length at d
    let interp = |at: f64| -> Option<f64> {
        let mut last = (0.0, foot.z);
        for &(li, zi) in samples.iter().skip(1) {
            if li >= at {
                let f = if li > last.0 {
                    (at - last.0) / (li - last.0)
                } else {
                    0.0
                };
                return Some(last.1 + (zi - last.1) * f);
            }
            last = (li, zi);
        }
        None
    };

    let fit: Vec<(f64, f64)> = samples.iter().copied().filter(|(l, _)| *l <= horizon).collect();
    let fit = if fit.len() < 4 { samples.clone() } else { fit };
    let cols = fit.len().min(4);
    let a_mat = DMatrix::from_fn(fit.len(), cols, |r, c| {
        let l = fit[r].0;
        match c {
            0 => 1.0,
            1 => l,
            2 => l * l / 2.0,
            _ => l * l * l / 6.0,
        }
    });
    let z = DVector::from_iterator(fit.len(), fit.iter().map(|s| s.1));
    let coef = a_mat.svd(true, true).solve(&z, 1e-12).expect("svd with both factors");
    let get = |i: usize| if i < cols { coef[i] } else { 0.0 };
    let profile = VerticalProfile {
        z: get(0),
        slope: get(1),
        c0: get(2),
        c1: get(3),
        height_at_d: 0.0,
    };
    let poly = |l: f64| profile.z + profile.slope * l + profile.c0 * l * l / 2.0 + profile.c1 * l * l * l / 6.0;
    let z_d = interp(d).unwrap_or_else(|| poly(d));
    Ok(VerticalProfile {
        height_at_d: z_d - profile.z - profile.slope * d,
        ..profile
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssociationMode {
    #[serde(rename = "oracle")]
    Oracle,
    #[serde(rename = "nn")]
    NearestNeighbor,
}

impl std::str::FromStr for AssociationMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "oracle" => Ok(AssociationMode::Oracle),
            "nn" => Ok(AssociationMode::NearestNeighbor),
            other => Err(format!("unknown association mode {other:?} (expected oracle or nn)")),
        }
    }
}

/// A detection awaiting association; `truth` is the simulator's feature id.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub sensor: SensorKind,
    pub value: DVector<f64>,
    pub truth: Option<FeatureId>,
}

/// A map feature's predicted measurement and innovation covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: FeatureId,
    pub predicted: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
}

/// Pairs detections with map features. Oracle mode passes ground-truth ids
/// through; nearest-neighbor mode assigns greedily by Mahalanobis distance
/// within the χ² gate `threshold`. Returns `(detection index, feature)`
/// sorted by detection index; unmatched detections are absent.
pub fn associate(
    detections: &[Detection],
    candidates: &[Candidate],
    mode: AssociationMode,
    threshold: f64,
) -> Vec<(usize, FeatureId)> {
    match mode {
        AssociationMode::Oracle => detections
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.truth.map(|id| (i, id)))
            .collect(),
        AssociationMode::NearestNeighbor => {
            let mut pairs = Vec::new();
            for (j, c) in candidates.iter().enumerate() {
                let Some(chol) = linalg::cholesky(&c.innovation_cov) else {
                    continue;
                };
                for (i, d) in detections.iter().enumerate() {
                    if d.value.len() != c.predicted.len() {
                        continue;
                    }
                    let nu = residual(d.sensor, &d.value, &c.predicted);
                    let d2 = nu.dot(&chol.solve(&nu));
                    if d2 <= threshold {
                        pairs.push((d2, i, j));
                    }
                }
            }
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut used_d = vec![false; detections.len()];
            let mut used_c = vec![false; candidates.len()];
            let mut out = Vec::new();
            for (_, i, j) in pairs {
                if !used_d[i] && !used_c[j] {
                    used_d[i] = true;
                    used_c[j] = true;
                    out.push((i, candidates[j].id));
                }
            }
            out.sort_by_key(|p| p.0);
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn straight_map(profile: impl Fn(f64) -> f64) -> Map {
        Map {
            landmarks: vec![],
            polylines: vec![Polyline {
                id: 1,
                role: LaneRole::Center,
                closed: false,
                points: (0..=200)
                    .map(|i| Vector3::new(i as f64, 0.0, profile(i as f64)))
                    .collect(),
            }],
        }
    }

    #[test]
    fn load_minimal_and_reject_invalid() {
        let m = Map::from_json_str(r#"{"landmarks":[{"id":1,"position":[1,2,3]}]}"#).unwrap();
        assert_eq!(m.landmarks.len(), 1);
        let one_point = r#"{"polylines":[{"id":1,"role":"center","points":[[0,0,0]]}]}"#;
        assert!(
            matches!(Map::from_json_str(one_point), Err(MapError::Invalid { field, .. }) if field == "polylines[0].points")
        );
        let dup = r#"{"landmarks":[{"id":1,"position":[0,0,0]},{"id":1,"position":[1,0,0]}]}"#;
        assert!(matches!(Map::from_json_str(dup), Err(MapError::Invalid { field, .. }) if field == "landmarks[1].id"));
        let repeated = r#"{"polylines":[{"id":1,"role":"center","points":[[0,0,0],[0,0,0]]}]}"#;
        assert!(matches!(Map::from_json_str(repeated), Err(MapError::Invalid { .. })));
        let unknown = r#"{"landmarks":[],"lanes":[]}"#;
        assert!(matches!(Map::from_json_str(unknown), Err(MapError::Parse { .. })));
        let bad = "{\n  \"landmarks\": [\n    {\"id\": \"x\"}\n  ]\n}";
        assert!(matches!(Map::from_json_str(bad), Err(MapError::Parse { line: 3, .. })));
    }

    #[test]
    fn canonical_round_trip_is_byte_stable() {
        let m = synth::RoadLoop::default().build_map();
        let text = m.to_canonical_json();
        let back = Map::from_json_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_canonical_json(), text);
    }

    fn lidar() -> SensorSpec {
        SensorSpec {
            max_range: 50.0,
            h_fov: FRAC_PI_2,
            v_fov: FRAC_PI_2,
            mount: Pose::default(),
        }
    }

    #[test]
    fn landmark_visibility() {
        let map = Map {
            landmarks: vec![
                Landmark {
                    id: 3,
                    position: Vector3::new(5.0, 0.0, 0.0),
                },
                Landmark {
                    id: 1,
                    position: Vector3::new(-5.0, 0.0, 0.0),
                },
                Landmark {
                    id: 2,
                    position: Vector3::new(50.0, 0.0, 0.0),
                },
                Landmark {
                    id: 4,
                    position: Vector3::new(50.001, 0.0, 0.0),
                },
            ],
            polylines: vec![],
        };
        let seen: Vec<u32> = visible_landmarks(&map, &Pose::default(), &lidar())
            .iter()
            .map(|v| v.0)
            .collect();
        assert_eq!(seen, vec![2, 3]);
        // turned around, only the one behind is in view
        let back = Pose::planar(0.0, 0.0, PI);
        let seen: Vec<u32> = visible_landmarks(&map, &back, &lidar()).iter().map(|v| v.0).collect();
        assert_eq!(seen, vec![1]);
    }

    fn camera() -> CameraModel {
        CameraModel {
            fx: 800.0,
            fy: 800.0,
            cx: 640.0,
            cy: 360.0,
            width: 1280.0,
            height: 720.0,
            mount: Pose::new(Vector3::new(1.5, 0.0, 1.4), 0.0, 0.0),
        }
    }

    fn lane_map() -> Map {
        let line = |id, y: f64| Polyline {
            id,
            role: LaneRole::LeftBoundary,
            closed: false,
            points: (0..=10)
                .map(|i| Vector3::new(-20.0 + 10.0 * i as f64, y, 0.0))
                .collect(),
        };
        Map {
            landmarks: vec![],
            polylines: vec![line(1, 1.75), line(2, -1.75)],
        }
    }

    #[test]
    fn segment_visibility_and_clipping() {
        let vis = LineVisibility {
            max_range: 60.0,
            min_length_px: 1.0,
        };
        let map = lane_map();
        let cam = camera();
        let pose = Pose::default();
        let segs = visible_segments(&map, &pose, &cam, &vis);
        assert!(!segs.is_empty());
        // the segment from x=0 to x=10 straddles the camera plane (camera at x=1.5)
        let straddle = segs
            .iter()
            .find(|s| s.id == FeatureId::Segment { polyline: 1, index: 2 })
            .expect("straddling segment is clipped and kept");
        let proj = cam.projection(&pose);
        for p in [straddle.a, straddle.b] {
            let px = crate::geometry::project_point(&proj, &crate::geometry::homogeneous(&p)).unwrap();
            assert!(
                px.x >= -1e-6 && px.x <= 1280.0 + 1e-6 && px.y >= -1e-6 && px.y <= 720.0 + 1e-6,
                "{px:?}"
            );
            assert!(cam.optical_point(&pose, &p).z >= NEAR_PLANE - 1e-12);
        }
        // lane entirely behind
        let behind = Pose::planar(200.0, 0.0, 0.0);
        assert!(visible_segments(&map, &behind, &cam, &vis).is_empty());
        // order stable
        assert_eq!(segs, visible_segments(&map, &pose, &cam, &vis));
    }

    #[test]
    fn vertical_profile_flat_and_clothoid() {
        let flat = straight_map(|_| 0.0);
        let p = local_vertical_profile(&flat, &Vector3::new(50.3, 0.2, 0.0), 0.0, 10.0).unwrap();
        assert_eq!((p.c0, p.c1, p.height_at_d), (0.0, 0.0, 0.0));

        let c0 = 0.02;
        let hill = straight_map(|l| c0 * l * l / 2.0);
        let p = local_vertical_profile(&hill, &Vector3::new(40.0, 0.0, 0.0), 0.0, 10.0).unwrap();
        assert_abs_diff_eq!(p.c0, c0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.c1, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.slope, c0 * 40.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.height_at_d, c0 * 100.0 / 2.0, epsilon = 1e-6);

        let (c0, c1) = (0.01, 0.0005);
        let map = straight_map(|l| c0 * l * l / 2.0 + c1 * l * l * l / 6.0);
        let p = local_vertical_profile(&map, &Vector3::new(0.0, 0.0, 0.0), 0.0, 10.0).unwrap();
        assert_abs_diff_eq!(p.c0, c0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.c1, c1, epsilon = 1e-6);

        // driving the other way flips the odd coefficients
        let p = local_vertical_profile(&map, &Vector3::new(100.0, 0.0, 0.0), PI, 10.0).unwrap();
        let (c0_here, c1_here) = (c0 + c1 * 100.0, c1);
        assert_abs_diff_eq!(p.c0, c0_here, epsilon = 1e-6);
        assert_abs_diff_eq!(p.c1, -c1_here, epsilon = 1e-6);

        assert!(matches!(
            local_vertical_profile(&map, &Vector3::new(50.0, 30.0, 0.0), 0.0, 10.0),
            Err(MapError::OffMap { .. })
        ));
    }

    #[test]
    fn association_modes() {
        let det = |v: f64, truth| Detection {
            sensor: SensorKind::CameraPoint,
            value: DVector::from_vec(vec![v, 0.0]),
            truth,
        };
        let cand = |v: f64, id| Candidate {
            id: FeatureId::Landmark(id),
            predicted: DVector::from_vec(vec![v, 0.0]),
            innovation_cov: DMatrix::identity(2, 2),
        };
        let dets = vec![det(0.0, Some(FeatureId::Landmark(9))), det(100.0, None)];
        let oracle = associate(&dets, &[], AssociationMode::Oracle, 9.0);
        assert_eq!(oracle, vec![(0, FeatureId::Landmark(9))]);
        let nn = associate(
            &dets,
            &[cand(0.5, 1), cand(1.0, 2)],
            AssociationMode::NearestNeighbor,
            9.21,
        );
        assert_eq!(nn, vec![(0, FeatureId::Landmark(1))]);
        let none = associate(&dets[1..], &[cand(0.0, 1)], AssociationMode::NearestNeighbor, 9.21);
        assert!(none.is_empty());
    }
}
