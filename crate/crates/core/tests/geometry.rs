use std::f64::consts::PI;

use dkff::geometry::{
    hesse_residual, homogeneous, line_to_hesse, plucker_from_points, project_line, project_point, vehicle_to_world,
    world_to_vehicle, wrap_angle, yaw_pitch_rotation, CameraModel, HesseLine, HomogeneousLine2D, Pose,
};
use dkff::sim::scenario::default_camera;
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn pose() -> impl Strategy<Value = Pose> {
    (vec3(100.0), -PI..PI, -0.4..0.4f64).prop_map(|(p, yaw, pitch)| Pose::new(p, yaw, pitch))
}

/// A camera pose and a point at least half a meter in front of it.
fn camera_and_point() -> impl Strategy<Value = (CameraModel, Pose, Vector3<f64>)> {
    (pose(), 1.0..80.0f64, -20.0..20.0f64, -5.0..5.0f64).prop_map(|(pose, fwd, left, up)| {
        let cam = default_camera();
        let p = pose.transform_point(&(cam.mount.position + Vector3::new(fwd, left, up)));
        (cam, pose, p)
    })
}

proptest! {
    #[test]
    fn wrapped_angles_stay_in_range(a in -1e3..1e3f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -PI && w <= PI);
        let turns = (a - w) / (2.0 * PI);
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn rotations_are_orthonormal(yaw in -10.0..10.0f64, pitch in -3.0..3.0f64) {
        let r = yaw_pitch_rotation(yaw, pitch);
        prop_assert!((r.transpose() * r - Matrix3::identity()).amax() <= 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn vehicle_world_round_trip(p in pose(), q in vec3(50.0)) {
        let back = world_to_vehicle(&p, &vehicle_to_world(&p, &q));
        prop_assert!((back - q).amax() <= 1e-9);
    }

    #[test]
    fn plucker_lines_are_skew_and_rank_two(a in vec3(50.0), b in vec3(50.0)) {
        prop_assume!((a - b).norm() > 1e-3);
        let l = plucker_from_points(&homogeneous(&a), &homogeneous(&b)).unwrap();
        prop_assert!(l.skew_defect() <= 1e-12);
        prop_assert_eq!(l.rank(1e-9), 2);
        let swapped = plucker_from_points(&homogeneous(&b), &homogeneous(&a)).unwrap();
        prop_assert!((swapped.matrix + l.matrix).amax() <= 1e-12);
    }

    #[test]
    fn projected_points_lie_on_projected_line(
        (cam, pose, a) in camera_and_point(),
        dir in vec3(1.0),
        ts in proptest::collection::vec(-3.0..3.0f64, 1..6),
    ) {
        prop_assume!(dir.norm() > 0.1);
        let b = a + dir.normalize() * 2.0;
        let p = cam.projection(&pose);
        let line = plucker_from_points(&homogeneous(&a), &homogeneous(&b)).unwrap();
        let Ok(img) = project_line(&p, &line) else { return Ok(()) };
        for t in ts {
            let x = a + (b - a) * t;
            if let Ok(px) = project_point(&p, &homogeneous(&x)) {
                if px.norm() < 1e5 {
                    prop_assert!(img.incidence(&px).abs() <= 1e-9 * px.norm().max(1.0), "{}", img.incidence(&px));
                }
            }
        }
    }

    #[test]
    fn hesse_form_is_canonical_and_scale_free(
        l in vec3(10.0),
        s in prop_oneof![-100.0..-0.01f64, 0.01..100.0f64],
    ) {
        prop_assume!(l.xy().norm() > 1e-3);
        let h = line_to_hesse(&HomogeneousLine2D(l)).unwrap();
        prop_assert!(h.rho >= 0.0);
        prop_assert!(h.gamma > -PI && h.gamma <= PI);
        let scaled = line_to_hesse(&HomogeneousLine2D(l * s)).unwrap();
        let d = hesse_residual(&scaled, &h);
        prop_assert!(d.x.abs() <= 1e-9 * h.rho.max(1.0) && d.y.abs() <= 1e-9);
        let n = l.xy().norm();
        prop_assert!((h.rho - (l.z / n).abs()).abs() <= 1e-9 * h.rho.max(1.0));
    }

    #[test]
    fn hesse_constructor_normalizes_sign(gamma in -10.0..10.0f64, rho in -100.0..100.0f64) {
        let h = HesseLine::new(gamma, rho);
        prop_assert!(h.rho >= 0.0 && h.gamma > -PI && h.gamma <= PI);
        // both forms describe the same point set
        let p = nalgebra::Vector2::new(rho * gamma.cos(), rho * gamma.sin());
        prop_assert!(h.distance(&p).abs() <= 1e-9 * rho.abs().max(1.0));
    }
}

#[test]
fn hesse_of_three_four_ten() {
    let h = line_to_hesse(&HomogeneousLine2D(Vector3::new(3.0, 4.0, -10.0))).unwrap();
    assert!((h.gamma - 4f64.atan2(3.0)).abs() < 1e-15);
    assert!((h.rho - 2.0).abs() < 1e-15);
}

#[test]
fn quarter_turn_pose_maps_forward_to_left() {
    let pose = Pose::new(Vector3::new(10.0, 2.0, 0.0), PI / 2.0, 0.0);
    let w = vehicle_to_world(&pose, &Vector3::new(1.0, 0.0, 0.0));
    assert!((w - Vector3::new(10.0, 3.0, 0.0)).amax() < 1e-12);
    let v = world_to_vehicle(&pose, &Vector3::new(10.0, 3.0, 0.0));
    assert!((v - Vector3::new(1.0, 0.0, 0.0)).amax() < 1e-12);
}
