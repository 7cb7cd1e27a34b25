//! Built-in consistency checks: every analytic Jacobian against central
//! finite differences, and the fused filter against the centralized update
//! on random linear-Gaussian systems.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{self, Variant, VehicleParams};
use crate::filter::{centralized_update, local_update, master_fuse, predict, LinearProcess, Linearized, StateEstimate};
use crate::geometry::{hesse_residual, vehicle_to_world, CameraModel, HesseLine};
use crate::linalg::{central_jacobian, plain_diff, relative_error};
use crate::measurement;

/// Relative tolerance for analytic Jacobians.
pub const JACOBIAN_TOL: f64 = 1e-5;
/// Absolute tolerance for the fused-vs-centralized comparison.
pub const EQUIVALENCE_TOL: f64 = 1e-9;

pub const CHECKS: [&str; 9] = [
    "dynamics_2d",
    "dynamics_3d",
    "point3d_2d",
    "point3d_3d",
    "odometry_2d",
    "odometry_3d",
    "camera_point",
    "camera_line",
    "linear_equivalence",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Options {
    pub samples: usize,
    pub seed: u64,
    /// Name of a check whose analytic result is deliberately corrupted.
    pub perturb: Option<String>,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            samples: 200,
            seed: 2024,
            perturb: None,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// A random moving vehicle state in the layout of `variant`.
pub fn random_state(rng: &mut ChaCha8Rng, variant: Variant) -> DVector<f64> {
    let l = variant.layout();
    let mut x = DVector::zeros(l.dim);
    x[l.x] = uniform(rng, -100.0, 100.0);
    x[l.y] = uniform(rng, -100.0, 100.0);
    let v = uniform(rng, 1.0, 25.0);
    let dir = uniform(rng, -3.1, 3.1);
    x[l.vx] = v * dir.cos();
    x[l.vy] = v * dir.sin();
    x[l.yaw] = uniform(rng, -3.1, 3.1);
    x[l.yaw_rate] = uniform(rng, -0.5, 0.5);
    x[l.steer] = uniform(rng, -0.5, 0.5);
    if let (Some(iz), Some(ivz), Some(ia), Some(ir), Some(i0), Some(i1)) =
        (l.z, l.vz, l.pitch, l.pitch_rate, l.c0, l.c1)
    {
        x[iz] = uniform(rng, -5.0, 5.0);
        x[ivz] = uniform(rng, -1.0, 1.0);
        x[ia] = uniform(rng, -0.15, 0.15);
        x[ir] = uniform(rng, -0.1, 0.1);
        x[i0] = uniform(rng, -0.02, 0.02);
        x[i1] = uniform(rng, -1e-3, 1e-3);
    }
    x
}

/// A world point in front of the vehicle at `x`.
pub fn random_point_ahead(rng: &mut ChaCha8Rng, variant: Variant, x: &DVector<f64>) -> Vector3<f64> {
    let q = Vector3::new(
        uniform(rng, 8.0, 60.0),
        uniform(rng, -10.0, 10.0),
        uniform(rng, -1.0, 4.0),
    );
    vehicle_to_world(&dynamics::pose_of(variant, x), &q)
}

pub fn reference_camera() -> CameraModel {
    crate::sim::scenario::default_camera()
}

fn perturbed(mut j: DMatrix<f64>, on: bool) -> DMatrix<f64> {
    if on {
        j[(0, 0)] += 1e-3 * j.amax().max(1.0);
    }
    j
}

fn jacobian_check(
    name: &'static str,
    opts: &Options,
    mut case: impl FnMut(&mut ChaCha8Rng) -> Option<(DMatrix<f64>, DMatrix<f64>)>,
) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ name.len() as u64);
    let perturb = opts.perturb.as_deref() == Some(name);
    let mut worst: f64 = 0.0;
    let mut evaluated = 0;
    while evaluated < opts.samples {
        let Some((analytic, numeric)) = case(&mut rng) else {
            continue;
        };
        worst = worst.max(relative_error(&perturbed(analytic, perturb), &numeric));
        evaluated += 1;
    }
    Check {
        name,
        passed: worst <= JACOBIAN_TOL,
        detail: format!("{evaluated} states, max relative error {worst:.2e} (tolerance {JACOBIAN_TOL:.0e})"),
    }
}

const FD_STEP: f64 = 1e-6;

fn dynamics_check(name: &'static str, variant: Variant, opts: &Options) -> Check {
    let p = VehicleParams::default();
    jacobian_check(name, opts, |rng| {
        let x = random_state(rng, variant);
        let analytic = dynamics::jacobian(variant, &x, &p, false).ok()?;
        let numeric = central_jacobian(
            &x,
            FD_STEP,
            |s| dynamics::derivative(variant, s, &p).expect("valid state"),
            plain_diff,
        );
        Some((analytic, numeric))
    })
}

fn point3d_check(name: &'static str, variant: Variant, opts: &Options) -> Check {
    jacobian_check(name, opts, |rng| {
        let x = random_state(rng, variant);
        let lm = random_point_ahead(rng, variant, &x);
        let analytic = measurement::point3d_sensor_jacobian(variant, &x, &lm);
        let numeric = central_jacobian(
            &x,
            FD_STEP,
            |s| measurement::point3d_sensor_predict(variant, s, &lm),
            plain_diff,
        );
        Some((analytic, numeric))
    })
}

fn odometry_check(name: &'static str, variant: Variant, opts: &Options) -> Check {
    let p = VehicleParams::default();
    jacobian_check(name, opts, |rng| {
        let x = random_state(rng, variant);
        let analytic = measurement::odometry_jacobian(variant, &x, &p);
        let numeric = central_jacobian(
            &x,
            FD_STEP,
            |s| measurement::odometry_predict(variant, s, &p),
            plain_diff,
        );
        Some((analytic, numeric))
    })
}

fn camera_point_check(opts: &Options) -> Check {
    let cam = reference_camera();
    let variant = Variant::Full3D;
    jacobian_check("camera_point", opts, |rng| {
        let x = random_state(rng, variant);
        let lm = random_point_ahead(rng, variant, &x);
        let analytic = measurement::point_camera_jacobian(variant, &x, &cam, &lm).ok()?;
        let mut ok = true;
        let numeric = central_jacobian(
            &x,
            FD_STEP,
            |s| match measurement::point_camera_predict(variant, s, &cam, &lm) {
                Ok(px) => DVector::from_column_slice(px.as_slice()),
                Err(_) => {
                    ok = false;
                    DVector::zeros(2)
                }
            },
            plain_diff,
        );
        ok.then_some((analytic, numeric))
    })
}

/// The numeric line Jacobian must agree with itself across two step sizes.
fn camera_line_check(opts: &Options) -> Check {
    let cam = reference_camera();
    let variant = Variant::Full3D;
    jacobian_check("camera_line", opts, |rng| {
        let x = random_state(rng, variant);
        let a = random_point_ahead(rng, variant, &x);
        let b = random_point_ahead(rng, variant, &x);
        if (a - b).norm() < 1.0 {
            return None;
        }
        let fine = measurement::line_camera_jacobian(variant, &x, &cam, &a, &b, FD_STEP).ok()?;
        let coarse = central_jacobian(
            &x,
            1e-5,
            |s| {
                let h = measurement::line_camera_predict(variant, s, &cam, &a, &b)
                    .unwrap_or(HesseLine { rho: 0.0, gamma: 0.0 });
                DVector::from_vec(vec![h.rho, h.gamma])
            },
            |p, m| {
                let r = hesse_residual(
                    &HesseLine { rho: p[0], gamma: p[1] },
                    &HesseLine { rho: m[0], gamma: m[1] },
                );
                DVector::from_vec(vec![r.x, r.y])
            },
        );
        // skip nearly degenerate projections where the line passes close to the image origin
        (measurement::line_camera_predict(variant, &x, &cam, &a, &b)
            .ok()?
            .rho
            .abs()
            > 1.0)
            .then_some((fine, coarse))
    })
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&a * a.transpose() + DMatrix::identity(n, n)) * scale
}

/// Largest mean/covariance deviation between the fused and centralized
/// answers on one random linear-Gaussian system.
pub fn linear_equivalence_case(rng: &mut ChaCha8Rng) -> f64 {
    let n = rng.random_range(4..=13);
    let filters = rng.random_range(2..=5);
    let process = LinearProcess {
        f: DMatrix::from_fn(n, n, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal)),
        qc: random_spd(rng, n, 0.1),
    };
    let mean = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let prior = StateEstimate::new(mean, random_spd(rng, n, 1.0)).expect("random spd prior");
    let prior = predict(&prior, &process, 0.1).expect("linear prediction");
    let truth = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let zs: Vec<Linearized> = (0..filters)
        .map(|_| {
            let m = rng.random_range(1..=3);
            let h = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let r = random_spd(rng, m, 0.5);
            let z = &h * &truth + DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            Linearized {
                innovation: z - &h * &prior.mean,
                h,
                r,
            }
        })
        .collect();
    let locals: Vec<StateEstimate> = zs
        .iter()
        .map(|z| local_update(&prior, std::slice::from_ref(z)).expect("local update"))
        .collect();
    let fused = master_fuse(&prior, &locals, &[]).expect("fusion");
    let central = centralized_update(&prior, &zs).expect("centralized");
    (fused.mean - central.mean)
        .amax()
        .max((fused.covariance - central.covariance).amax())
}

fn equivalence_check(opts: &Options) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let perturb = opts.perturb.as_deref() == Some("linear_equivalence");
    let mut worst: f64 = 0.0;
    for _ in 0..opts.samples {
        worst = worst.max(linear_equivalence_case(&mut rng));
    }
    if perturb {
        worst += 1e-3;
    }
    Check {
        name: "linear_equivalence",
        passed: worst <= EQUIVALENCE_TOL,
        detail: format!(
            "{} systems, max deviation {worst:.2e} (tolerance {EQUIVALENCE_TOL:.0e})",
            opts.samples
        ),
    }
}

pub fn run(opts: &Options) -> Vec<Check> {
    vec![
        dynamics_check("dynamics_2d", Variant::Flat2D, opts),
        dynamics_check("dynamics_3d", Variant::Full3D, opts),
        point3d_check("point3d_2d", Variant::Flat2D, opts),
        point3d_check("point3d_3d", Variant::Full3D, opts),
        odometry_check("odometry_2d", Variant::Flat2D, opts),
        odometry_check("odometry_3d", Variant::Full3D, opts),
        camera_point_check(opts),
        camera_line_check(opts),
        equivalence_check(opts),
    ]
}
