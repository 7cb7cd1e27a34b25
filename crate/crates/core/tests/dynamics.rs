use dkff::dynamics::{
    derivative, derivative_2d, derivative_3d, jacobian, step, ProcessNoise, State2D, Variant, VehicleParams,
};
use dkff::linalg::{central_jacobian, plain_diff, relative_error};
use dkff::selftest::random_state;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params() -> VehicleParams {
    VehicleParams {
        wheelbase: 2.5,
        preview_distance: 10.0,
    }
}

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::Flat2D), Just(Variant::Full3D)]
}

proptest! {
    #[test]
    fn jacobian_matches_central_differences(v in variant(), seed in any::<u64>()) {
        let x = random_state(&mut ChaCha8Rng::seed_from_u64(seed), v);
        let p = params();
        let analytic = jacobian(v, &x, &p, false).unwrap();
        let numeric = central_jacobian(&x, 1e-6, |s| derivative(v, s, &p).unwrap(), plain_diff);
        prop_assert!(relative_error(&analytic, &numeric) <= 1e-5);
    }

    #[test]
    fn flat_state_embeds_into_3d(seed in any::<u64>()) {
        let x = random_state(&mut ChaCha8Rng::seed_from_u64(seed), Variant::Flat2D);
        let s = State2D::from_slice(x.as_slice());
        let d2 = derivative_2d(&s, &params()).unwrap();
        let d3 = derivative_3d(&s.lift(), &params()).unwrap();
        let l = Variant::Full3D.layout();
        let planar = [l.x, l.y, l.vx, l.vy, l.yaw, l.yaw_rate, l.steer];
        for (i, &j) in planar.iter().enumerate() {
            prop_assert!((d2[i] - d3[j]).abs() <= 1e-12);
        }
        prop_assert_eq!(d3[l.z.unwrap()], 0.0);
    }

    #[test]
    fn step_wraps_angles_and_scales_noise(v in variant(), seed in any::<u64>(), dt in 0.001..0.5f64) {
        let x = random_state(&mut ChaCha8Rng::seed_from_u64(seed), v);
        let q = ProcessNoise((0..v.dim()).map(|i| 0.1 * (i + 1) as f64).collect());
        let out = step(v, &x, dt, &q, &params()).unwrap();
        for i in v.angle_indices() {
            prop_assert!(out.state[i] > -std::f64::consts::PI && out.state[i] <= std::f64::consts::PI);
        }
        for i in 0..v.dim() {
            prop_assert!((out.process_cov[(i, i)] - q.0[i] * dt).abs() <= 1e-15);
        }
        prop_assert_eq!(out.process_cov.clone() - DMatrix::from_diagonal(&out.process_cov.diagonal()), DMatrix::zeros(v.dim(), v.dim()));
    }
}

#[test]
fn coarse_steps_track_a_fine_reference() {
    let v = Variant::Flat2D;
    let l = v.layout();
    let mut x = DVector::zeros(l.dim);
    x[l.vx] = 10.0;
    x[l.steer] = 0.1;
    let q = ProcessNoise::zeros(v);
    let p = params();
    let mut coarse = x.clone();
    for _ in 0..100 {
        coarse = step(v, &coarse, 0.01, &q, &p).unwrap().state;
    }
    let mut fine = x;
    for _ in 0..100_000 {
        fine = step(v, &fine, 1e-5, &q, &p).unwrap().state;
    }
    assert!((coarse[l.x] - fine[l.x]).abs() <= 1e-4);
    assert!((coarse[l.y] - fine[l.y]).abs() <= 1e-4);
    assert!((coarse[l.yaw] - fine[l.yaw]).abs() <= 1e-6);
}

#[test]
fn yaw_rate_of_the_bicycle_model() {
    let s = State2D {
        vx: 10.0,
        steer: 0.1,
        ..Default::default()
    };
    let d = derivative_2d(&s, &params()).unwrap();
    assert!((d[4] - 10.0 / 2.5 * 0.1f64.tan()).abs() < 1e-12);
    assert!((d[4] - 0.40134).abs() < 1e-5);
}
