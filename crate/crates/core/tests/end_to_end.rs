//! Search, estimate and distribution through the public API.

use fixpose_core::init_bound::MeasurementSet;
use fixpose_core::pose_distribution::{confidence_report, pose_distribution, DistributionConfig};
use fixpose_core::pose_search::{compute_superset, point_estimate, Fixture, SearchConfig};
use fixpose_core::se3_grid::{rotation_angle, standard_bound_table};
use fixpose_core::sim::{builtin_primitive, random_pose, run_trial, Primitive, SimulationSpec};
use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_search() -> SearchConfig {
    SearchConfig {
        cell_budget: 300_000,
        ..SearchConfig::default()
    }
}

#[test]
fn tetrahedron_trial_is_bounded_and_calibrated() {
    let builtin = builtin_primitive(Primitive::Tetrahedron);
    let spec = SimulationSpec {
        seed: 21,
        ..SimulationSpec::default()
    };
    let trial = run_trial(&builtin.mesh, &spec).unwrap();
    let fixture = Fixture::new(&builtin.mesh, 0.0);
    let table = standard_bound_table();
    let superset = compute_superset(&fixture, &trial.measurements, &table, &small_search()).unwrap();
    let truth = fixture.fixture_frame_pose(&trial.ground_truth);
    assert!(superset.contains(&truth));

    let bounds = point_estimate(&superset);
    let t = Point3::from(truth.translation.vector);
    assert!((bounds.position_estimate - t).norm() <= bounds.position_bound);
    assert!(rotation_angle(&bounds.rotation_estimate, &truth.rotation) <= bounds.rotation_bound);

    let config = DistributionConfig {
        seed: 21,
        ..DistributionConfig::default()
    };
    let dist = pose_distribution(&superset, &fixture, &trial.measurements, &config).unwrap();
    let total: f64 = dist.samples.iter().map(|s| s.probability).sum();
    assert!((total - 1.0).abs() < 1e-9);
    let ci = confidence_report(&dist).unwrap();
    for w in ci.position.windows(2).chain(ci.rotation.windows(2)) {
        assert!(w[0] <= w[1]);
    }
    let (pos99, _) = ci.at(0.99).unwrap();
    assert!(pos99 <= bounds.position_bound);
}

#[test]
fn probe_ball_centers_are_matched_against_the_offset_surface() {
    // points on cube faces pushed out by the ball radius along the face normal
    let builtin = builtin_primitive(Primitive::Cube);
    let half = 0.125 / 3f64.sqrt();
    let radius = 0.004;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let truth = random_pose(&mut rng);
    let mut points = Vec::new();
    for face in 0..6 {
        for _ in 0..2 {
            let axis = face % 3;
            let sign = if face < 3 { 1.0 } else { -1.0 };
            let mut p = Vector3::new(
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.8..0.8),
            ) * half;
            p[axis] = sign * (half + radius);
            points.push(truth * Point3::from(p));
        }
    }
    let meas = MeasurementSet::new(points, 1e-3, 1e-7).unwrap();
    let table = standard_bound_table();

    let with_ball = Fixture::new(&builtin.mesh, radius);
    let superset = compute_superset(&with_ball, &meas, &table, &small_search()).unwrap();
    assert!(superset.contains(&with_ball.fixture_frame_pose(&truth)));

    // the same points are on the offset surface but 4 mm off the bare mesh
    let bare = Fixture::new(&builtin.mesh, 0.0);
    for p in meas.points() {
        let q = with_ball.fixture_frame_pose(&truth).inverse_transform_point(p);
        assert!(with_ball.distance(&q) < 1e-12);
        assert!((bare.distance(&q) - radius).abs() < 1e-12);
    }
}

#[test]
fn fixture_and_mesh_frames_are_inverse() {
    let builtin = builtin_primitive(Primitive::Bracket);
    let fixture = Fixture::new(&builtin.mesh.translated(&Vector3::new(0.3, -0.1, 0.05)), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pose = random_pose(&mut rng);
    let back = fixture.mesh_frame_pose(&fixture.fixture_frame_pose(&pose));
    assert!((back.to_homogeneous() - pose.to_homogeneous()).amax() < 1e-12);
    assert!((fixture.origin_offset() - Vector3::new(0.3, -0.1, 0.05)).norm() < 1e-9);
}
