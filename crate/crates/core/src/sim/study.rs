//! Multi-seed studies: feature-combination tables and point-count sweeps.
//!
//! Truth depends only on the map and the controls, so it is simulated once
//! per study; the (configuration, seed) runs then execute in parallel.

use rayon::prelude::*;
use serde::Serialize;

use super::run::{evaluate, run_filter, Summary};
use super::scenario::Scenario;
use super::simulate::{simulate_measurements, simulate_truth, Simulation, TruthSample};
use super::ScenarioError;
use crate::map::Map;
use crate::measurement::SensorKind;

/// A named set of feature sensors; odometry is always on, GPS always off.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeatureSet {
    pub name: String,
    pub sensors: Vec<SensorKind>,
}

impl FeatureSet {
    pub fn new(name: &str, sensors: &[SensorKind]) -> Self {
        Self {
            name: name.to_string(),
            sensors: sensors.to_vec(),
        }
    }
}

fn sensor_from_name(name: &str) -> Option<SensorKind> {
    SensorKind::ALL.into_iter().find(|k| k.name() == name)
}

/// Feature sets of the 3D-sensor point / camera line comparison.
pub fn point3d_line_sets() -> Vec<FeatureSet> {
    vec![
        FeatureSet::new("3D points (3D sensor)", &[SensorKind::Point3d]),
        FeatureSet::new("lines (camera)", &[SensorKind::CameraLine]),
        FeatureSet::new("combination", &[SensorKind::Point3d, SensorKind::CameraLine]),
    ]
}

/// Feature sets of the camera point / camera line comparison.
pub fn camera_point_line_sets() -> Vec<FeatureSet> {
    vec![
        FeatureSet::new("3D points (camera)", &[SensorKind::CameraPoint]),
        FeatureSet::new("lines (camera)", &[SensorKind::CameraLine]),
        FeatureSet::new("combination", &[SensorKind::CameraPoint, SensorKind::CameraLine]),
    ]
}

/// Parses a preset (`point3d-line`, `camera-point-line`) or `;`-separated
/// sets of `+`-joined sensor names such as
/// `point3d;camera_line;point3d+camera_line`. An empty item is dead
/// reckoning on odometry alone.
pub fn parse_sets(spec: &str) -> Result<Vec<FeatureSet>, ScenarioError> {
    match spec.trim() {
        "point3d-line" => return Ok(point3d_line_sets()),
        "camera-point-line" => return Ok(camera_point_line_sets()),
        _ => {}
    }
    spec.split(';')
        .map(|item| {
            let item = item.trim();
            let sensors = item
                .split('+')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    sensor_from_name(s)
                        .filter(|k| !matches!(k, SensorKind::Gps | SensorKind::Odometry))
                        .ok_or_else(|| ScenarioError::Invalid {
                            field: "sets".into(),
                            message: format!("unknown feature sensor {s:?}"),
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let name = if item.is_empty() { "odometry only" } else { item };
            Ok(FeatureSet::new(name, &sensors))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComboRow {
    pub name: String,
    pub mean_abs_lateral: f64,
    pub mean_abs_longitudinal: f64,
    pub mean_position_error: f64,
    pub runs: usize,
    pub diverged_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub count: usize,
    pub noise: f64,
    pub mean_abs_lateral: f64,
    pub mean_abs_longitudinal: f64,
    pub mean_position_error: f64,
    pub runs: usize,
}

fn with_sensors(template: &Scenario, sensors: &[SensorKind]) -> Scenario {
    let mut s = template.clone();
    for kind in SensorKind::ALL {
        s.sensors.set_enabled(kind, sensors.contains(&kind));
    }
    s.sensors.set_enabled(SensorKind::Odometry, true);
    s
}

fn run_one(scn: &Scenario, map: &Map, truth: &[TruthSample]) -> Result<Summary, crate::Error> {
    let sim = Simulation {
        truth: truth.to_vec(),
        measurements: simulate_measurements(scn, map, truth),
    };
    let run = run_filter(scn, map, &sim)?;
    Ok(evaluate(&sim, &run)?.summary)
}

/// Runs every scenario in parallel, preserving input order.
fn run_all(jobs: &[Scenario], map: &Map, truth: &[TruthSample]) -> Result<Vec<Summary>, crate::Error> {
    jobs.par_iter().map(|s| run_one(s, map, truth)).collect()
}

fn average(summaries: &[Summary]) -> (f64, f64, f64) {
    let n = summaries.len() as f64;
    let sum = |f: fn(&Summary) -> f64| summaries.iter().map(f).sum::<f64>() / n;
    (
        sum(|s| s.mean_abs_lateral),
        sum(|s| s.mean_abs_longitudinal),
        sum(|s| s.mean_position_error),
    )
}

/// Seed-averaged errors of each feature set.
pub fn combo_study(
    template: &Scenario,
    map: &Map,
    sets: &[FeatureSet],
    seeds: &[u64],
) -> Result<Vec<ComboRow>, crate::Error> {
    if sets.is_empty() {
        return Err(ScenarioError::EmptyStudy("at least one feature set").into());
    }
    if seeds.is_empty() {
        return Err(ScenarioError::EmptyStudy("at least one seed").into());
    }
    let truth = simulate_truth(template, map)?;
    let jobs: Vec<Scenario> = sets
        .iter()
        .flat_map(|set| {
            seeds.iter().map(move |&seed| {
                let mut s = with_sensors(template, &set.sensors);
                s.seed = seed;
                s
            })
        })
        .collect();
    let results = run_all(&jobs, map, &truth)?;
    Ok(sets
        .iter()
        .zip(results.chunks(seeds.len()))
        .map(|(set, runs)| {
            let (lat, long, pos) = average(runs);
            ComboRow {
                name: set.name.clone(),
                mean_abs_lateral: lat,
                mean_abs_longitudinal: long,
                mean_position_error: pos,
                runs: runs.len(),
                diverged_runs: runs.iter().filter(|r| r.diverged).count(),
            }
        })
        .collect())
}

/// Seed-averaged error per (point-feature count, camera pixel variance).
/// Sensors are taken from the template as is.
pub fn sweep_point_count(
    template: &Scenario,
    map: &Map,
    counts: &[usize],
    noise_levels: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepCell>, crate::Error> {
    if counts.is_empty() || counts.contains(&0) {
        return Err(ScenarioError::EmptyStudy("a non-empty list of counts >= 1").into());
    }
    if noise_levels.is_empty() {
        return Err(ScenarioError::EmptyStudy("at least one noise level").into());
    }
    if seeds.is_empty() {
        return Err(ScenarioError::EmptyStudy("at least one seed").into());
    }
    let truth = simulate_truth(template, map)?;
    let cells: Vec<(f64, usize)> = noise_levels
        .iter()
        .flat_map(|&noise| counts.iter().map(move |&c| (noise, c)))
        .collect();
    let jobs: Vec<Scenario> = cells
        .iter()
        .flat_map(|&(noise, count)| {
            seeds.iter().map(move |&seed| {
                let mut s = template.clone();
                s.feature_cap = Some(count);
                s.sensors.camera_point.variance = noise;
                s.seed = seed;
                s
            })
        })
        .collect();
    let results = run_all(&jobs, map, &truth)?;
    Ok(cells
        .iter()
        .zip(results.chunks(seeds.len()))
        .map(|(&(noise, count), runs)| {
            let (lat, long, pos) = average(runs);
            SweepCell {
                count,
                noise,
                mean_abs_lateral: lat,
                mean_abs_longitudinal: long,
                mean_position_error: pos,
                runs: runs.len(),
            }
        })
        .collect())
}
