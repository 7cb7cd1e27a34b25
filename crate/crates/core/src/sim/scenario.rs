//! Scenario files: vehicle controls, sensor suite, filter settings.
//!
//! Scenarios are JSON documents validated strictly (unknown fields are
//! errors). `--override KEY=VALUE` edits are applied to the parsed JSON
//! tree before validation, so they are type-checked like the file itself.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ScenarioError;
use crate::dynamics::{ProcessNoise, Variant, VehicleParams, MAX_DT};
use crate::geometry::{CameraModel, Pose};
use crate::map::synth::RoadLoop;
use crate::map::{AssociationMode, SensorSpec};
use crate::measurement::SensorKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Control {
    pub t: f64,
    pub speed: f64,
    pub steering: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

/// Standard deviations of the initial estimate error when starting from truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitSigma {
    pub position: f64,
    pub height: f64,
    pub velocity: f64,
    pub yaw: f64,
    pub yaw_rate: f64,
    pub pitch: f64,
    pub pitch_rate: f64,
    pub steering: f64,
    pub curvature: f64,
    pub curvature_rate: f64,
}

impl Default for InitSigma {
    fn default() -> Self {
        Self {
            position: 0.5,
            height: 0.1,
            velocity: 0.2,
            yaw: 0.01,
            yaw_rate: 0.005,
            pitch: 0.005,
            pitch_rate: 0.002,
            steering: 0.002,
            curvature: 1e-3,
            curvature_rate: 1e-4,
        }
    }
}

/// How the filter's first estimate is formed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Init {
    /// Position from the first GPS fix, all other states zero, `M₀ = 10⁶·I`.
    FirstGps,
    /// Truth perturbed by seeded Gaussian errors of the given sizes, with a
    /// matching diagonal covariance.
    Truth {
        #[serde(default)]
        sigma: InitSigma,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpsConfig {
    pub enabled: bool,
    pub rate: f64,
    /// Per-axis variance (m²).
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdometryConfig {
    pub enabled: bool,
    pub rate: f64,
    /// Variances of speed, yaw rate, pitch rate, steering angle and preview height.
    pub variance: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point3dConfig {
    pub enabled: bool,
    pub rate: f64,
    /// Per-axis variance (m²).
    pub variance: f64,
    pub spec: SensorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraPointConfig {
    pub enabled: bool,
    pub rate: f64,
    /// Pixel variance at `reference_range`; the standard deviation scales
    /// linearly with range.
    pub variance: f64,
    pub reference_range: f64,
    pub max_range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraLineConfig {
    pub enabled: bool,
    pub rate: f64,
    /// Per-coordinate pixel variance of the two detected segment endpoints
    /// (px²), propagated to the Hesse parameters.
    pub variance: f64,
    pub max_range: f64,
    pub min_length_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sensors {
    pub gps: GpsConfig,
    pub odometry: OdometryConfig,
    pub point3d: Point3dConfig,
    pub camera_point: CameraPointConfig,
    pub camera_line: CameraLineConfig,
}

impl Sensors {
    pub fn enabled(&self, kind: SensorKind) -> bool {
        match kind {
            SensorKind::Gps => self.gps.enabled,
            SensorKind::Odometry => self.odometry.enabled,
            SensorKind::Point3d => self.point3d.enabled,
            SensorKind::CameraPoint => self.camera_point.enabled,
            SensorKind::CameraLine => self.camera_line.enabled,
        }
    }

    pub fn set_enabled(&mut self, kind: SensorKind, on: bool) {
        match kind {
            SensorKind::Gps => self.gps.enabled = on,
            SensorKind::Odometry => self.odometry.enabled = on,
            SensorKind::Point3d => self.point3d.enabled = on,
            SensorKind::CameraPoint => self.camera_point.enabled = on,
            SensorKind::CameraLine => self.camera_line.enabled = on,
        }
    }

    pub fn rate(&self, kind: SensorKind) -> f64 {
        match kind {
            SensorKind::Gps => self.gps.rate,
            SensorKind::Odometry => self.odometry.rate,
            SensorKind::Point3d => self.point3d.rate,
            SensorKind::CameraPoint => self.camera_point.rate,
            SensorKind::CameraLine => self.camera_line.rate,
        }
    }

    /// Sets every measurement variance to zero.
    pub fn zero_noise(&mut self) {
        self.gps.variance = 0.0;
        self.odometry.variance = [0.0; 5];
        self.point3d.variance = 0.0;
        self.camera_point.variance = 0.0;
        self.camera_line.variance = 0.0;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Map file, relative to the scenario file's directory.
    pub map: PathBuf,
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    pub variant: Variant,
    pub association: AssociationMode,
    #[serde(default)]
    pub vehicle: VehicleParams,
    pub start: StartPose,
    pub controls: Vec<Control>,
    pub init: Init,
    /// Diagonal process-noise densities; a per-variant default when absent.
    #[serde(default)]
    pub process_noise: Option<ProcessNoise>,
    /// χ² gate acceptance probability; no gating when absent.
    #[serde(default)]
    pub gating: Option<f64>,
    /// At most this many point features (nearest first) per sensor and tick.
    #[serde(default)]
    pub feature_cap: Option<usize>,
    pub camera: CameraModel,
    pub sensors: Sensors,
}

/// Default process-noise densities tuned for the synthetic loop at 10 m/s.
pub fn default_process_noise(variant: Variant) -> ProcessNoise {
    match variant {
        Variant::Flat2D => ProcessNoise(vec![1e-4, 1e-4, 0.05, 0.05, 1e-5, 1e-3, 1e-5]),
        Variant::Full3D => ProcessNoise(vec![
            1e-4, 1e-4, 1e-4, 0.05, 0.05, 0.05, 1e-5, 1e-3, 1e-5, 1e-3, 1e-5, 1e-6, 1e-7,
        ]),
    }
}

pub fn default_camera() -> CameraModel {
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

impl Scenario {
    /// One lap of `road` at 10 m/s with every sensor at the reference noise
    /// settings and GPS disabled.
    pub fn default_loop(road: &RoadLoop) -> Self {
        let vehicle = VehicleParams::default();
        let (ctl, lap) = road.lap_controls(10.0, vehicle.wheelbase);
        let dt = 0.1;
        Scenario {
            map: PathBuf::from("map.json"),
            duration: ((lap / dt).floor() * dt * 1e6).round() / 1e6,
            dt,
            seed: 1,
            variant: Variant::Full3D,
            association: AssociationMode::Oracle,
            vehicle,
            start: StartPose::default(),
            controls: ctl
                .into_iter()
                .map(|(t, speed, steering)| Control { t, speed, steering })
                .collect(),
            init: Init::Truth {
                sigma: InitSigma::default(),
            },
            process_noise: None,
            gating: None,
            feature_cap: None,
            camera: default_camera(),
            sensors: Sensors {
                gps: GpsConfig {
                    enabled: false,
                    rate: 1.0,
                    variance: 10.0,
                },
                odometry: OdometryConfig {
                    enabled: true,
                    rate: 10.0,
                    variance: [0.01, 1e-4, 1e-4, 1e-5, 0.01],
                },
                point3d: Point3dConfig {
                    enabled: true,
                    rate: 10.0,
                    variance: 10.0,
                    spec: SensorSpec {
                        max_range: 60.0,
                        h_fov: std::f64::consts::PI,
                        v_fov: std::f64::consts::FRAC_PI_2,
                        mount: Pose::new(Vector3::new(1.5, 0.0, 1.6), 0.0, 0.0),
                    },
                },
                camera_point: CameraPointConfig {
                    enabled: true,
                    rate: 10.0,
                    variance: 10.0,
                    reference_range: 20.0,
                    max_range: 120.0,
                },
                camera_line: CameraLineConfig {
                    enabled: true,
                    rate: 1.0,
                    variance: 5.0,
                    max_range: 40.0,
                    min_length_px: 150.0,
                },
            },
        }
    }

    pub fn ticks(&self) -> usize {
        (self.duration / self.dt + 1e-9).floor() as usize
    }

    pub fn process_noise(&self) -> ProcessNoise {
        self.process_noise
            .clone()
            .unwrap_or_else(|| default_process_noise(self.variant))
    }

    /// Emission period of a sensor in ticks.
    pub fn period(&self, kind: SensorKind) -> usize {
        ((1.0 / (self.sensors.rate(kind) * self.dt)).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |field: &str, message: String| {
            Err(ScenarioError::Invalid {
                field: field.to_string(),
                message,
            })
        };
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return bad("dt", format!("{} outside (0, {MAX_DT}]", self.dt));
        }
        if !(self.duration >= self.dt) {
            return bad("duration", format!("{} shorter than one tick", self.duration));
        }
        if let Err(e) = self.vehicle.validate() {
            return bad("vehicle", e.to_string());
        }
        if self.controls.is_empty() {
            return bad("controls", "at least one control point is required".into());
        }
        for (i, w) in self.controls.windows(2).enumerate() {
            if w[1].t < w[0].t {
                return bad(
                    &format!("controls[{}].t", i + 1),
                    "control times must be non-decreasing".into(),
                );
            }
        }
        for (i, c) in self.controls.iter().enumerate() {
            if !(c.speed.is_finite() && c.steering.abs() < std::f64::consts::FRAC_PI_2) {
                return bad(
                    &format!("controls[{i}]"),
                    "speed must be finite and |steering| < pi/2".into(),
                );
            }
        }
        if let Err(e) = self.process_noise().validate(self.variant) {
            return bad("process_noise", e.to_string());
        }
        if let Some(p) = self.gating {
            if !(p > 0.0 && p < 1.0) {
                return bad("gating", format!("acceptance probability {p} outside (0, 1)"));
            }
        }
        if self.feature_cap == Some(0) {
            return bad("feature_cap", "must be at least 1".into());
        }
        if let Err(e) = self.camera.validate() {
            return bad("camera", e.to_string());
        }
        if let Err(e) = self.sensors.point3d.spec.validate() {
            return bad("sensors.point3d.spec", e.to_string());
        }
        for kind in SensorKind::ALL {
            let rate = self.sensors.rate(kind);
            if !(rate > 0.0 && rate <= 1.0 / self.dt + 1e-9) {
                return bad(
                    &format!("sensors.{}.rate", kind.name()),
                    format!("{rate} Hz outside (0, 1/dt]"),
                );
            }
        }
        let s = &self.sensors;
        let variances = [
            ("sensors.gps.variance", s.gps.variance),
            ("sensors.point3d.variance", s.point3d.variance),
            ("sensors.camera_point.variance", s.camera_point.variance),
            ("sensors.camera_line.variance", s.camera_line.variance),
        ]
        .into_iter()
        .chain(s.odometry.variance.iter().map(|v| ("sensors.odometry.variance", *v)));
        for (field, v) in variances {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(field, format!("variance {v} must be finite and non-negative"));
            }
        }
        for (field, v) in [
            ("sensors.camera_point.reference_range", s.camera_point.reference_range),
            ("sensors.camera_point.max_range", s.camera_point.max_range),
            ("sensors.camera_line.max_range", s.camera_line.max_range),
        ] {
            if !(v > 0.0) {
                return bad(field, format!("{v} must be positive"));
            }
        }
        if matches!(self.init, Init::FirstGps) && !s.gps.enabled {
            return bad("init", "first_gps initialization needs the gps sensor enabled".into());
        }
        Ok(())
    }

    pub fn from_value(value: Value) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_path_to_error::deserialize(value).map_err(|e| ScenarioError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_json_str(text: &str, overrides: &[String]) -> Result<Self, ScenarioError> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| ScenarioError::Schema {
            path: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }
}

/// Reads a scenario file and applies `KEY=VALUE` overrides. Returns the
/// scenario and the resolved map path.
pub fn load_scenario(path: &Path, overrides: &[String]) -> Result<(Scenario, PathBuf), ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let scenario = Scenario::from_json_str(&text, overrides)?;
    let map_path = if scenario.map.is_absolute() {
        scenario.map.clone()
    } else {
        path.parent().unwrap_or(Path::new(".")).join(&scenario.map)
    };
    Ok((scenario, map_path))
}

/// Applies one `dotted.key=value` edit. The value is parsed as JSON and
/// falls back to a plain string; array elements are addressed by index.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), ScenarioError> {
    let bad = |message: String| ScenarioError::Override {
        spec: spec.to_string(),
        message,
    };
    let (key, raw) = spec.split_once('=').ok_or_else(|| bad("expected KEY=VALUE".into()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(bad("empty key".into()));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    // unknown keys are inserted and then rejected by the schema
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| bad(format!("{part:?} is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| bad(format!("index {idx} out of range (length {len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(bad(format!("{part:?} is not inside an object or array"))),
        };
    }
    Ok(())
}
