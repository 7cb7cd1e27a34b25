use std::f64::consts::PI;

use dkff::geometry::{world_to_vehicle, Pose};
use dkff::map::synth::RoadLoop;
use dkff::map::{load_map, local_vertical_profile, save_map, visible_landmarks, Map, MapError, SensorSpec};
use nalgebra::Vector3;
use proptest::prelude::*;

#[test]
fn synthetic_map_survives_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("map.json");
    let map = RoadLoop::default().build_map();
    save_map(&map, &path).unwrap();
    let back = load_map(&path).unwrap();
    assert_eq!(back, map);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), map.to_canonical_json());
}

#[test]
fn broken_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_map(&dir.path().join("absent.json")),
        Err(MapError::Io { .. })
    ));
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"landmarks":[{"id":1,"position":[0,0,"NaN"]}]}"#).unwrap();
    assert!(matches!(load_map(&path), Err(MapError::Parse { .. })));
    std::fs::write(
        &path,
        r#"{"polylines":[{"id":7,"role":"other","closed":true,"points":[[0,0,0],[1,0,0]]}]}"#,
    )
    .unwrap();
    assert!(matches!(load_map(&path), Err(MapError::Invalid { field, .. }) if field == "polylines[0].points"));
}

#[test]
fn hill_grade_and_crest_are_recovered() {
    let road = RoadLoop::default();
    let map = road.build_map();
    let hill = road.hill.unwrap();
    // middle of the climbing grade
    let s = hill.start + 2.0 * hill.ramp + hill.grade_length / 2.0;
    let p = road.point(s, 0.3, 0.0);
    let prof = local_vertical_profile(&map, &p, 0.0, 10.0).unwrap();
    let e = road.elevation(s);
    assert!((prof.slope - e.slope).abs() < 1e-6, "{prof:?} vs {e:?}");
    assert!(prof.c0.abs() < 1e-6 && prof.c1.abs() < 1e-6);
    assert!((prof.z - e.z).abs() < 1e-6);
    // flat road away from the hill
    let p = road.point(50.0, 0.0, 0.0);
    let prof = local_vertical_profile(&map, &p, 0.0, 10.0).unwrap();
    assert_eq!((prof.slope, prof.c0, prof.c1), (0.0, 0.0, 0.0));
    // approaching the crest the road curves downward
    let s = hill.start + 2.0 * hill.ramp + hill.grade_length + 2.0;
    let prof = local_vertical_profile(&map, &road.point(s, 0.0, 0.0), 0.0, 10.0).unwrap();
    assert!(prof.c0 < 0.0 && prof.height_at_d < 0.0, "{prof:?}");
}

fn spec() -> impl Strategy<Value = SensorSpec> {
    (5.0..80.0f64, 0.2..PI, 0.2..PI).prop_map(|(max_range, h_fov, v_fov)| SensorSpec {
        max_range,
        h_fov,
        v_fov,
        mount: Pose::new(Vector3::new(1.0, 0.0, 1.5), 0.0, 0.0),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn visible_landmarks_respect_range_and_view(s in 0.0..2000.0f64, spec in spec()) {
        let road = RoadLoop::default();
        let map = road.build_map();
        let (c, heading) = road.centerline(s);
        let pose = Pose::planar(c.x, c.y, heading);
        let seen = visible_landmarks(&map, &pose, &spec);
        prop_assert!(seen.windows(2).all(|w| w[0].0 < w[1].0));
        for lm in &map.landmarks {
            let in_view = spec.sees(&world_to_vehicle(&pose, &lm.position));
            prop_assert_eq!(in_view, seen.iter().any(|(id, _)| *id == lm.id));
            if in_view {
                let d = (lm.position - pose.transform_point(&spec.mount.position)).norm();
                prop_assert!(d <= spec.max_range + 1e-9);
            }
        }
    }
}

#[test]
fn empty_map_is_valid_but_off_map() {
    let map = Map::from_json_str("{}").unwrap();
    assert!(map.landmarks.is_empty() && map.polylines.is_empty());
    assert!(matches!(
        local_vertical_profile(&map, &Vector3::zeros(), 0.0, 10.0),
        Err(MapError::OffMap { .. })
    ));
}
