//! Deterministic scenario simulation, filter execution and error metrics.

pub mod output;
pub mod run;
pub mod scenario;
pub mod simulate;
pub mod study;

use thiserror::Error;

pub use run::{metrics, run_filter, run_scenario, FilterRun, RunResult, Summary, TickRecord};
pub use scenario::{load_scenario, Scenario};
pub use simulate::{simulate, simulate_measurements, simulate_truth, Simulation, TruthSample};
pub use study::{combo_study, sweep_point_count, ComboRow, FeatureSet, SweepCell};

/// Lateral error beyond which a run is flagged as diverged (m).
pub const DIVERGENCE_LATERAL: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenario schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invalid scenario field {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("bad override {spec:?}: {message}")]
    Override { spec: String, message: String },
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
    #[error("vehicle left the map at t = {t:.2} s ({message})")]
    OffMap { t: f64, message: String },
    #[error("first_gps initialization found no GPS fix at t = 0")]
    MissingInitialFix,
    #[error("truth and estimate lengths differ ({truth} vs {estimate})")]
    LengthMismatch { truth: usize, estimate: usize },
    #[error("study needs {0}")]
    EmptyStudy(&'static str),
}
