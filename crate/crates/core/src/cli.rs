//! The `dkff` command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 filter
//! divergence or numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dynamics::Variant;
use crate::map::synth::RoadLoop;
use crate::map::{load_map, save_map, AssociationMode, Map};
use crate::measurement::SensorKind;
use crate::selftest;
use crate::sim::output::{self, write_atomic};
use crate::sim::study::parse_sets;
use crate::sim::{combo_study, load_scenario, run_scenario, sweep_point_count, Scenario};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "dkff",
    version,
    about = "Map-relative localization with a decentralized Kalman filter"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// State variant: 2d or 3d.
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Data association: oracle or nn.
    #[arg(long)]
    pub assoc: Option<AssociationMode>,
    /// Scenario override as dotted.key=value (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate and filter one scenario.
    Run(Common),
    /// Error versus number of point features and pixel noise.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Feature counts, e.g. `1-10` or `1,2,4,8`.
        #[arg(long, default_value = "1-10")]
        counts: String,
        /// Camera pixel variances (px²), comma separated.
        #[arg(long, default_value = "5,10,20")]
        noise: String,
        /// Number of seeds per cell.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Error per feature combination.
    Combo {
        #[command(flatten)]
        common: Common,
        /// `point3d-line`, `camera-point-line`, or `;`-separated `+`-joined sensor names.
        #[arg(long, default_value = "point3d-line")]
        sets: String,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Finite-difference and linear-equivalence self checks.
    Selftest {
        /// Corrupt the named check to prove it can fail.
        #[arg(long)]
        perturb: Option<String>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Write the synthetic loop map and matching scenario templates.
    MakeMap {
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Diverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Filter(_) | Error::Dynamics(_) | Error::Measurement(_) | Error::Geometry(_) => {
                Failure::Diverged(e.to_string())
            }
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Config(format!("cannot write {}: {e}", path.display()))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    write_atomic(&path, text.as_bytes()).map_err(|e| io_err(&path, e))
}

fn prepare(common: &Common) -> Result<(Scenario, Map), Failure> {
    let (mut scn, map_path) = load_scenario(&common.scenario, &common.overrides).map_err(Error::from)?;
    if let Some(seed) = common.seed {
        scn.seed = seed;
    }
    if let Some(v) = common.variant {
        scn.variant = v;
        scn.process_noise = scn.process_noise.filter(|q| q.0.len() == v.dim());
    }
    if let Some(a) = common.assoc {
        scn.association = a;
    }
    scn.validate().map_err(Error::from)?;
    let map = load_map(&map_path).map_err(Error::from)?;
    std::fs::create_dir_all(&common.out).map_err(|e| io_err(&common.out, e))?;
    Ok((scn, map))
}

fn parse_counts(spec: &str) -> Result<Vec<usize>, Failure> {
    let bad = || Failure::Config(format!("bad --counts {spec:?}"));
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (
                    a.trim().parse().map_err(|_| bad())?,
                    b.trim().parse().map_err(|_| bad())?,
                );
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

fn parse_noise(spec: &str) -> Result<Vec<f64>, Failure> {
    spec.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| match p.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
            _ => Err(Failure::Config(format!("bad --noise value {p:?}"))),
        })
        .collect()
}

fn seed_list(base: u64, n: u64) -> Vec<u64> {
    (0..n).map(|i| base.wrapping_add(i)).collect()
}

/// Sweep template: camera points only, nearest-k selection.
pub fn sweep_template(road: &RoadLoop) -> Scenario {
    let mut s = Scenario::default_loop(road);
    for kind in SensorKind::ALL {
        s.sensors.set_enabled(kind, false);
    }
    s.sensors.set_enabled(SensorKind::Odometry, true);
    s.sensors.set_enabled(SensorKind::CameraPoint, true);
    s
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32, Failure> {
    let mut say = |text: &str| {
        let _ = out.write_all(text.as_bytes());
    };
    match cli.command {
        Command::Run(common) => {
            let (scn, map) = prepare(&common)?;
            let result = run_scenario(&scn, &map)?;
            write(&common.out, "records.csv", &output::records_csv(&result.records))?;
            write(&common.out, "summary.json", &output::to_json(&result.summary))?;
            say(&output::summary_table(&result));
            if result.summary.diverged {
                say("filter diverged\n");
                return Ok(EXIT_DIVERGED);
            }
        }
        Command::Sweep {
            common,
            counts,
            noise,
            seeds,
        } => {
            let counts = parse_counts(&counts)?;
            let noise = parse_noise(&noise)?;
            let (scn, map) = prepare(&common)?;
            let cells = sweep_point_count(&scn, &map, &counts, &noise, &seed_list(scn.seed, seeds))?;
            write(&common.out, "sweep.csv", &output::sweep_csv(&cells))?;
            write(&common.out, "sweep.json", &output::to_json(&cells))?;
            say(&output::sweep_table(&cells));
        }
        Command::Combo { common, sets, seeds } => {
            let sets = parse_sets(&sets).map_err(Error::from)?;
            let (scn, map) = prepare(&common)?;
            let rows = combo_study(&scn, &map, &sets, &seed_list(scn.seed, seeds))?;
            write(&common.out, "combo.csv", &output::combo_csv(&rows))?;
            write(&common.out, "combo.json", &output::to_json(&rows))?;
            say(&output::combo_table(&rows));
            if rows.iter().any(|r| r.diverged_runs > 0) {
                say("some runs diverged\n");
                return Ok(EXIT_DIVERGED);
            }
        }
        Command::Selftest { perturb, samples } => {
            if let Some(p) = &perturb {
                if !selftest::CHECKS.contains(&p.as_str()) {
                    return Err(Failure::Config(format!(
                        "unknown check {p:?}; expected one of {}",
                        selftest::CHECKS.join(", ")
                    )));
                }
            }
            let checks = selftest::run(&selftest::Options {
                samples,
                perturb,
                ..Default::default()
            });
            let mut failed = false;
            for c in &checks {
                say(&format!(
                    "{} {}: {}\n",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                ));
                failed |= !c.passed;
            }
            if failed {
                return Ok(EXIT_DIVERGED);
            }
        }
        Command::MakeMap { out: dir } => {
            std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
            let road = RoadLoop::default();
            let map_path = dir.join("map.json");
            save_map(&road.build_map(), &map_path).map_err(Error::from)?;
            write(&dir, "scenario.json", &Scenario::default_loop(&road).to_json())?;
            write(&dir, "sweep.json", &sweep_template(&road).to_json())?;
            say(&format!(
                "wrote map.json, scenario.json and sweep.json to {}\n",
                dir.display()
            ));
        }
    }
    Ok(EXIT_OK)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(Failure::Config(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Diverged(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_DIVERGED
        }
    }
}
