use dkff::dynamics::{Variant, VehicleParams};
use dkff::geometry::HesseLine;
use dkff::linalg::{central_jacobian, plain_diff, relative_error};
use dkff::measurement::{
    line_camera_predict, line_covariance_from_pixels, line_from_pixels, odometry_jacobian, odometry_predict,
    point3d_sensor_jacobian, point3d_sensor_predict, point_camera_jacobian, point_camera_predict, residual, SensorKind,
};
use dkff::selftest::{random_point_ahead, random_state, reference_camera};
use nalgebra::{DVector, Vector2, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::Flat2D), Just(Variant::Full3D)]
}

fn setup(v: Variant, seed: u64) -> (DVector<f64>, Vector3<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_state(&mut rng, v);
    let p = random_point_ahead(&mut rng, v, &x);
    (x, p)
}

fn v(x: impl AsRef<[f64]>) -> DVector<f64> {
    DVector::from_column_slice(x.as_ref())
}

proptest! {
    #[test]
    fn point3d_jacobian_matches_differences(var in variant(), seed in any::<u64>()) {
        let (x, lm) = setup(var, seed);
        let analytic = point3d_sensor_jacobian(var, &x, &lm);
        let numeric = central_jacobian(&x, 1e-6, |s| point3d_sensor_predict(var, s, &lm), plain_diff);
        prop_assert!(relative_error(&analytic, &numeric) <= 1e-5);
    }

    #[test]
    fn odometry_jacobian_matches_differences(var in variant(), seed in any::<u64>()) {
        let (x, _) = setup(var, seed);
        let p = VehicleParams::default();
        let analytic = odometry_jacobian(var, &x, &p);
        let numeric = central_jacobian(&x, 1e-6, |s| odometry_predict(var, s, &p), plain_diff);
        prop_assert!(relative_error(&analytic, &numeric) <= 1e-5);
    }

    #[test]
    fn camera_point_jacobian_matches_differences(var in variant(), seed in any::<u64>()) {
        let (x, lm) = setup(var, seed);
        let cam = reference_camera();
        let analytic = point_camera_jacobian(var, &x, &cam, &lm).unwrap();
        let numeric = central_jacobian(&x, 1e-6, |s| v(point_camera_predict(var, s, &cam, &lm).unwrap()), plain_diff);
        prop_assert!(relative_error(&analytic, &numeric) <= 1e-5);
    }

    #[test]
    fn line_residual_ignores_the_sign_convention(
        rho_a in 0.0..5.0f64,
        rho_b in 0.0..5.0f64,
        gamma in -3.0..3.0f64,
    ) {
        // lines on either side of the origin with the same orientation
        let a = HesseLine::new(gamma, rho_a);
        let b = HesseLine::new(gamma + std::f64::consts::PI, rho_b);
        let r = residual(SensorKind::CameraLine, &v(a.to_vector()), &v(b.to_vector()));
        prop_assert!((r[0] + rho_a + rho_b).abs() <= 1e-9);
        prop_assert!(r[1].abs() <= 1e-9);
    }

    #[test]
    fn pixel_line_covariance_scales_with_variance(
        p in (0.0..1280.0f64, 0.0..720.0f64),
        q in (0.0..1280.0f64, 0.0..720.0f64),
        var in 0.1..50.0f64,
    ) {
        let (p, q) = (Vector2::new(p.0, p.1), Vector2::new(q.0, q.1));
        prop_assume!((p - q).norm() > 50.0);
        let line = line_from_pixels(&p, &q).unwrap();
        prop_assert!(line.distance(&p).abs() <= 1e-9 && line.distance(&q).abs() <= 1e-9);
        let c1 = line_covariance_from_pixels(&p, &q, 1.0).unwrap();
        let c = line_covariance_from_pixels(&p, &q, var).unwrap();
        prop_assert!((c - c1 * var).amax() <= 1e-6 * c.amax());
        prop_assert!(c[(0, 0)] > 0.0 && c.determinant() > 0.0);
    }
}

#[test]
fn lane_line_rho_is_monotone_in_lateral_offset() {
    let cam = reference_camera();
    let var = Variant::Flat2D;
    let (a, b) = (Vector3::new(5.0, 1.8, 0.0), Vector3::new(40.0, 1.8, 0.0));
    let mut last = None;
    for i in 0..=40 {
        let delta = -1.0 + 0.05 * i as f64;
        let mut x = DVector::zeros(var.dim());
        x[var.layout().y] = delta;
        let rho = line_camera_predict(var, &x, &cam, &a, &b).unwrap().rho;
        if let Some(prev) = last {
            assert!(rho > prev, "rho {rho} after {prev} at offset {delta}");
        }
        last = Some(rho);
    }
}
