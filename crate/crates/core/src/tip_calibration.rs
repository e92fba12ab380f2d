//! Tool-tip and table calibration from recorded flange poses, and the
//! sample error bound derived from the fit residuals.
//!
//! Three pose sets are used. Coarse poses pivot the tip about a fixed point,
//! which gives a first tip offset. Table poses touch the table at a fixed
//! orientation; the tip positions they yield are fitted with a plane whose
//! normal does not depend on the coarse offset. Fine poses touch the same
//! plane at varied orientations and determine the tip offset and plane
//! offset together. The tip offset is the center of the probe ball, so
//! measurements lie on the fixture surface offset by the ball radius.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Isometry3, Point3, Unit, Vector3};

use crate::mesh::DistanceIndex;

pub const MIN_COARSE_POSES: usize = 4;
pub const MIN_FINE_POSES: usize = 4;
pub const MIN_TABLE_POINTS: usize = 3;
pub const DEFAULT_MARGIN: f64 = 1.25;
/// Smallest sample bound produced by [`CalibrationOptions::default`], meters.
pub const DEFAULT_BOUND_FLOOR: f64 = 1e-4;
/// Least-squares systems with a larger singular-value ratio are rejected.
pub const MAX_CONDITION: f64 = 1e9;

/// Which calibration step a logged pose belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PoseStage {
    /// Pivoting the tip about a fixed point.
    Coarse,
    /// Touching the table with a fixed flange orientation.
    Table,
    /// Touching the table with varied orientations.
    Fine,
}

impl PoseStage {
    pub fn name(self) -> &'static str {
        match self {
            PoseStage::Coarse => "coarse",
            PoseStage::Table => "table",
            PoseStage::Fine => "fine",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "coarse" => Some(PoseStage::Coarse),
            "table" => Some(PoseStage::Table),
            "fine" => Some(PoseStage::Fine),
            _ => None,
        }
    }
}

/// Flange poses in the robot base frame, each tagged with its stage.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PoseLog {
    pub entries: Vec<(PoseStage, Isometry3<f64>)>,
}

impl PoseLog {
    pub fn new(entries: Vec<(PoseStage, Isometry3<f64>)>) -> Self {
        Self { entries }
    }

    pub fn stage(&self, stage: PoseStage) -> Vec<Isometry3<f64>> {
        self.entries
            .iter()
            .filter(|(s, _)| *s == stage)
            .map(|(_, p)| *p)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("{stage} stage needs at least {need} poses, got {got}")]
    TooFewPoses {
        stage: &'static str,
        need: usize,
        got: usize,
    },
    #[error("{stage} system is rank deficient (condition number {condition:.3e}); orientations are too similar")]
    RankDeficient { stage: &'static str, condition: f64 },
    #[error("table points are colinear or coincident")]
    Colinear,
    #[error("margin factor must be at least 1, got {0}")]
    InvalidMargin(f64),
    #[error("no residuals to derive a bound from")]
    NoResiduals,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct CalibrationOptions {
    pub margin: f64,
    /// Lower limit applied to the derived sample bound, meters.
    pub bound_floor: f64,
    /// The table normal is oriented to have a non-negative dot product with this.
    pub normal_reference: Vector3<f64>,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            bound_floor: DEFAULT_BOUND_FLOOR,
            normal_reference: Vector3::z(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TipCalibration {
    /// Probe-ball center in the flange frame.
    pub tip: Vector3<f64>,
    pub coarse_tip: Vector3<f64>,
    pub table_normal: Unit<Vector3<f64>>,
    /// Table plane `n . x = plane_offset` in the base frame.
    pub plane_offset: f64,
    /// Signed distance of each fine-stage tip position to the fitted plane.
    pub residuals: Vec<f64>,
    pub sample_bound: f64,
}

/// Least squares by SVD with a condition-number check.
fn solve_least_squares(
    a: DMatrix<f64>,
    b: DVector<f64>,
    stage: &'static str,
) -> Result<DVector<f64>, CalibrationError> {
    let svd = a.svd(true, true);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(CalibrationError::RankDeficient { stage, condition });
    }
    Ok(svd.solve(&b, 0.0).expect("U and V were computed"))
}

/// Tip offset from poses pivoting about one point: least squares over the
/// tip offset `p` and the pivot `q` with `R_i p - q = -t_i`.
pub fn coarse_tip_calibration(poses: &[Isometry3<f64>]) -> Result<Vector3<f64>, CalibrationError> {
    if poses.len() < MIN_COARSE_POSES {
        return Err(CalibrationError::TooFewPoses {
            stage: "coarse",
            need: MIN_COARSE_POSES,
            got: poses.len(),
        });
    }
    let n = poses.len();
    let mut a = DMatrix::zeros(3 * n, 6);
    let mut b = DVector::zeros(3 * n);
    for (i, pose) in poses.iter().enumerate() {
        let r = pose.rotation.to_rotation_matrix();
        a.view_mut((3 * i, 0), (3, 3)).copy_from(r.matrix());
        a.view_mut((3 * i, 3), (3, 3)).fill_with_identity();
        a.view_mut((3 * i, 3), (3, 3)).scale_mut(-1.0);
        b.rows_mut(3 * i, 3).copy_from(&(-pose.translation.vector));
    }
    let x = solve_least_squares(a, b, "coarse")?;
    Ok(Vector3::new(x[0], x[1], x[2]))
}

/// Plane normal through points by SVD of the centered points, oriented
/// toward `reference`.
pub fn table_normal(points: &[Point3<f64>], reference: &Vector3<f64>) -> Result<Unit<Vector3<f64>>, CalibrationError> {
    if points.len() < MIN_TABLE_POINTS {
        return Err(CalibrationError::TooFewPoses {
            stage: "table",
            need: MIN_TABLE_POINTS,
            got: points.len(),
        });
    }
    let centroid = points.iter().map(|p| p.coords).sum::<Vector3<f64>>() / points.len() as f64;
    let mut m = DMatrix::zeros(points.len(), 3);
    for (i, p) in points.iter().enumerate() {
        m.row_mut(i).copy_from(&(p.coords - centroid).transpose());
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("V was computed");
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s = &svd.singular_values;
    // a plane needs two directions of spread
    if !(s[order[1]] > s[order[0]] / MAX_CONDITION) {
        return Err(CalibrationError::Colinear);
    }
    let row = v_t.row(order[2]);
    let mut normal = Vector3::new(row[0], row[1], row[2]);
    if normal.dot(reference) < 0.0 {
        normal = -normal;
    }
    Ok(Unit::new_normalize(normal))
}

/// Tip offset `p` and plane offset `k` from poses touching the plane with
/// normal `n`: least squares over `n^T R_i p - k = -n^T t_i`. Returns the
/// solution and the per-pose residuals `n^T (R_i p + t_i) - k`.
pub fn fine_tip_calibration(
    poses: &[Isometry3<f64>],
    normal: &Unit<Vector3<f64>>,
) -> Result<(Vector3<f64>, f64, Vec<f64>), CalibrationError> {
    if poses.len() < MIN_FINE_POSES {
        return Err(CalibrationError::TooFewPoses {
            stage: "fine",
            need: MIN_FINE_POSES,
            got: poses.len(),
        });
    }
    let n = poses.len();
    let mut a = DMatrix::zeros(n, 4);
    let mut b = DVector::zeros(n);
    for (i, pose) in poses.iter().enumerate() {
        let row = pose.rotation.to_rotation_matrix().matrix().transpose() * normal.as_ref();
        a[(i, 0)] = row.x;
        a[(i, 1)] = row.y;
        a[(i, 2)] = row.z;
        a[(i, 3)] = -1.0;
        b[i] = -normal.dot(&pose.translation.vector);
    }
    let x = solve_least_squares(a, b, "fine")?;
    let tip = Vector3::new(x[0], x[1], x[2]);
    let k = x[3];
    let residuals = poses
        .iter()
        .map(|pose| normal.dot(&(pose * Point3::from(tip)).coords) - k)
        .collect();
    Ok((tip, k, residuals))
}

/// `margin * max |residual|`.
pub fn derive_sample_bound(residuals: &[f64], margin: f64) -> Result<f64, CalibrationError> {
    if !(margin >= 1.0) {
        return Err(CalibrationError::InvalidMargin(margin));
    }
    if residuals.is_empty() {
        return Err(CalibrationError::NoResiduals);
    }
    Ok(margin * residuals.iter().fold(0.0f64, |m, r| m.max(r.abs())))
}

/// Distance from `query` to the surface offset outward by `ball_radius`.
/// Exact for queries outside the solid and for convex parts of the surface;
/// near tight concavities it can only underestimate.
pub fn offset_distance(index: &DistanceIndex, query: &Point3<f64>, ball_radius: f64) -> f64 {
    let d = index.distance(query);
    if ball_radius > 0.0 {
        (d - ball_radius).abs()
    } else {
        d
    }
}

/// Runs the three stages on a log.
pub fn calibrate(log: &PoseLog, options: &CalibrationOptions) -> Result<TipCalibration, CalibrationError> {
    let coarse_tip = coarse_tip_calibration(&log.stage(PoseStage::Coarse))?;
    let table_points: Vec<Point3<f64>> = log
        .stage(PoseStage::Table)
        .iter()
        .map(|pose| pose * Point3::from(coarse_tip))
        .collect();
    let table_normal = table_normal(&table_points, &options.normal_reference)?;
    let (tip, plane_offset, residuals) = fine_tip_calibration(&log.stage(PoseStage::Fine), &table_normal)?;
    let sample_bound = derive_sample_bound(&residuals, options.margin)?.max(options.bound_floor);
    Ok(TipCalibration {
        tip,
        coarse_tip,
        table_normal,
        plane_offset,
        residuals,
        sample_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::TriangleMesh;
    use crate::sim::uniform_rotation;
    use core::f64::consts::PI;
    use nalgebra::{Translation3, UnitQuaternion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Flange pointing down, tilted by up to `max_tilt` about a random axis.
    fn tilted(rng: &mut ChaCha8Rng, max_tilt: f64) -> UnitQuaternion<f64> {
        let down = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI);
        let axis = Unit::new_normalize(uniform_rotation(rng) * Vector3::x());
        let angle = rng.random_range(-max_tilt..max_tilt);
        UnitQuaternion::from_axis_angle(&axis, angle) * down
    }

    fn flange_for(tip_world: &Point3<f64>, rotation: UnitQuaternion<f64>, tip: &Vector3<f64>) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(tip_world.coords - rotation * tip), rotation)
    }

    /// Point on the plane `n . x = k` offset within the plane by `(u, v)`.
    fn plane_point(n: &Unit<Vector3<f64>>, k: f64, u: f64, v: f64) -> Point3<f64> {
        let a = n.cross(&Vector3::x());
        let a = if a.norm() < 0.1 { n.cross(&Vector3::y()) } else { a }.normalize();
        let b = n.cross(&a);
        Point3::from(n.as_ref() * k + a * u + b * v)
    }

    struct Synthetic {
        tip: Vector3<f64>,
        normal: Unit<Vector3<f64>>,
        k: f64,
        log: PoseLog,
    }

    fn synthetic(rng: &mut ChaCha8Rng) -> Synthetic {
        let tip = Vector3::new(
            rng.random_range(-0.03..0.03),
            rng.random_range(-0.03..0.03),
            rng.random_range(0.1..0.25),
        );
        // within 0.3 rad of +z
        let normal = tilted(rng, 0.3) * -Vector3::z_axis();
        let k = rng.random_range(-0.2..0.2);
        let pivot = plane_point(&normal, k, 0.4, 0.1);
        let mut entries = Vec::new();
        for _ in 0..8 {
            entries.push((PoseStage::Coarse, flange_for(&pivot, tilted(rng, 0.6), &tip)));
        }
        let fixed = tilted(rng, 0.2);
        for _ in 0..10 {
            let p = plane_point(&normal, k, rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
            entries.push((PoseStage::Table, flange_for(&p, fixed, &tip)));
        }
        for _ in 0..12 {
            let p = plane_point(&normal, k, rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
            entries.push((PoseStage::Fine, flange_for(&p, tilted(rng, 0.6), &tip)));
        }
        Synthetic {
            tip,
            normal,
            k,
            log: PoseLog::new(entries),
        }
    }

    #[test]
    fn coarse_recovers_exact_tip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tip = Vector3::new(0.01, 0.02, 0.15);
        let pivot = Point3::new(0.5, -0.2, 0.1);
        let poses: Vec<_> = (0..6)
            .map(|_| flange_for(&pivot, tilted(&mut rng, 0.6), &tip))
            .collect();
        let est = coarse_tip_calibration(&poses).unwrap();
        assert!((est - tip).norm() < 1e-9);
    }

    #[test]
    fn coarse_tolerates_translation_noise() {
        let tip = Vector3::new(0.01, 0.02, 0.15);
        let pivot = Point3::new(0.5, -0.2, 0.1);
        let noise = Normal::new(0.0, 1e-4).unwrap();
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let poses: Vec<_> = (0..10)
                .map(|_| {
                    let mut p = flange_for(&pivot, tilted(&mut rng, 0.6), &tip);
                    p.translation.vector += Vector3::from_fn(|_, _| noise.sample(&mut rng));
                    p
                })
                .collect();
            let est = coarse_tip_calibration(&poses).unwrap();
            assert!((est - tip).norm() < 1e-3, "seed {seed}: {}", (est - tip).norm());
        }
    }

    #[test]
    fn coarse_with_one_orientation_is_rank_deficient() {
        let tip = Vector3::new(0.01, 0.02, 0.15);
        let r = UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3);
        let poses: Vec<_> = (0..5)
            .map(|_| flange_for(&Point3::new(0.5, 0.0, 0.0), r, &tip))
            .collect();
        assert!(matches!(
            coarse_tip_calibration(&poses),
            Err(CalibrationError::RankDeficient { stage: "coarse", .. })
        ));
        assert!(matches!(
            coarse_tip_calibration(&poses[..3]),
            Err(CalibrationError::TooFewPoses { .. })
        ));
    }

    #[test]
    fn table_normal_examples() {
        let flat = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 2.0, 0.0),
            Point3::new(3.0, 1.0, 0.0),
        ];
        let n = table_normal(&flat, &Vector3::z()).unwrap();
        assert!((n.as_ref() - Vector3::z()).norm() < 1e-15);
        let n = table_normal(&flat, &-Vector3::z()).unwrap();
        assert!((n.as_ref() + Vector3::z()).norm() < 1e-15);

        let truth = Unit::new_normalize(Vector3::new(0.2, -0.1, 1.0));
        let three = [
            plane_point(&truth, 0.3, 0.0, 0.0),
            plane_point(&truth, 0.3, 0.5, 0.1),
            plane_point(&truth, 0.3, -0.2, 0.4),
        ];
        let n = table_normal(&three, &Vector3::z()).unwrap();
        assert!((n.as_ref() - truth.as_ref()).norm() < 1e-12);

        let line = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 1.0),
            Point3::new(2.0, 2.0, 2.0),
        ];
        assert_eq!(table_normal(&line, &Vector3::z()), Err(CalibrationError::Colinear));
    }

    #[test]
    fn noisy_table_normal_is_accurate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = Unit::new_normalize(Vector3::new(0.05, 0.1, 1.0));
        let noise = Normal::new(0.0, 1e-5).unwrap();
        let pts: Vec<_> = (0..30)
            .map(|_| {
                plane_point(&truth, 0.1, rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3))
                    + Vector3::from_fn(|_, _| noise.sample(&mut rng))
            })
            .collect();
        let n = table_normal(&pts, &Vector3::z()).unwrap();
        assert!(n.dot(&truth).min(1.0).acos() < 0.01f64.to_radians());
    }

    #[test]
    fn fine_calibration_on_exact_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = synthetic(&mut rng);
        let (tip, k, res) = fine_tip_calibration(&s.log.stage(PoseStage::Fine), &s.normal).unwrap();
        assert!((tip - s.tip).norm() < 1e-9);
        assert!((k - s.k).abs() < 1e-9);
        assert!(res.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn fine_calibration_with_pose_noise() {
        let noise = Normal::new(0.0, 2e-4).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let s = synthetic(&mut rng);
            let poses: Vec<_> = s
                .log
                .stage(PoseStage::Fine)
                .into_iter()
                .map(|mut p| {
                    p.translation.vector += Vector3::from_fn(|_, _| noise.sample(&mut rng));
                    p
                })
                .collect();
            let (_, _, res) = fine_tip_calibration(&poses, &s.normal).unwrap();
            let max = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            assert!(max < 1e-3, "seed {seed}: {max}");
        }
    }

    #[test]
    fn fine_with_one_orientation_is_rank_deficient() {
        let tip = Vector3::new(0.0, 0.0, 0.1);
        let n = Vector3::z_axis();
        let r = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI);
        let poses: Vec<_> = (0..6)
            .map(|i| flange_for(&Point3::new(0.1 * i as f64, 0.05, 0.0), r, &tip))
            .collect();
        assert!(matches!(
            fine_tip_calibration(&poses, &n),
            Err(CalibrationError::RankDeficient { stage: "fine", .. })
        ));
    }

    #[test]
    fn sample_bound_examples() {
        assert!((derive_sample_bound(&[0.3e-3, -0.8e-3, 0.1e-3], 1.25).unwrap() - 1e-3).abs() < 1e-15);
        assert_eq!(derive_sample_bound(&[0.0, 0.0], 1.25).unwrap(), 0.0);
        assert_eq!(derive_sample_bound(&[0.2, -0.7], 1.0).unwrap(), 0.7);
        assert_eq!(
            derive_sample_bound(&[0.2], 0.9),
            Err(CalibrationError::InvalidMargin(0.9))
        );
        assert_eq!(derive_sample_bound(&[], 1.1), Err(CalibrationError::NoResiduals));
    }

    #[test]
    fn full_round_trip_on_random_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let s = synthetic(&mut rng);
            let c = calibrate(&s.log, &CalibrationOptions::default()).unwrap();
            let (n, k) = (s.normal.into_inner(), s.k);
            assert!((c.tip - s.tip).norm() < 1e-9);
            assert!((c.coarse_tip - s.tip).norm() < 1e-9);
            assert!((c.table_normal.as_ref() - n).norm() < 1e-9);
            assert!((c.plane_offset - k).abs() < 1e-9);
            assert!((c.table_normal.norm() - 1.0).abs() < 1e-12);
            assert_eq!(c.sample_bound, DEFAULT_BOUND_FLOOR);
        }
    }

    #[test]
    fn residuals_are_invariant_under_base_rotation() {
        let noise = Normal::new(0.0, 2e-4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = synthetic(&mut rng);
        let poses: Vec<_> = s
            .log
            .stage(PoseStage::Fine)
            .into_iter()
            .map(|mut p| {
                p.translation.vector += Vector3::from_fn(|_, _| noise.sample(&mut rng));
                p
            })
            .collect();
        let (tip, _, res) = fine_tip_calibration(&poses, &s.normal).unwrap();
        let g = Isometry3::from_parts(Translation3::new(0.3, -1.0, 0.2), uniform_rotation(&mut rng));
        let moved: Vec<_> = poses.iter().map(|p| g * p).collect();
        let normal = g.rotation * s.normal;
        let (tip2, _, res2) = fine_tip_calibration(&moved, &normal).unwrap();
        assert!((tip - tip2).norm() < 1e-9);
        for (a, b) in res.iter().zip(&res2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_radius_offset_is_plain_distance() {
        let index = DistanceIndex::build(&crate::mesh::tests::unit_cube());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let q = Point3::from(Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0)));
            assert_eq!(offset_distance(&index, &q, 0.0), index.distance(&q));
        }
        // 0.25 outside the +x face of the cube, which spans [-0.5, 0.5]^3
        let on = Point3::new(0.75, 0.1, -0.2);
        assert!(offset_distance(&index, &on, 0.25).abs() < 1e-15);
    }

    /// Rounded cube: every point of a fine grid on the cube enlarged by `r`
    /// is pulled onto the offset surface. Faces stay flat; edges and corners
    /// become cylinder and sphere patches.
    fn offset_cube_mesh(h: f64, r: f64, n: usize) -> TriangleMesh {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let e = h + r;
        for axis in 0..3 {
            for sign in [-1.0, 1.0] {
                let base = vertices.len() as u32;
                for i in 0..=n {
                    for j in 0..=n {
                        let u = -e + 2.0 * e * i as f64 / n as f64;
                        let v = -e + 2.0 * e * j as f64 / n as f64;
                        let mut p = Vector3::zeros();
                        p[axis] = sign * e;
                        p[(axis + 1) % 3] = u;
                        p[(axis + 2) % 3] = v;
                        let inner = p.map(|c| c.clamp(-h, h));
                        vertices.push(Point3::from(inner + (p - inner).normalize() * r));
                    }
                }
                for i in 0..n as u32 {
                    for j in 0..n as u32 {
                        let a = base + i * (n as u32 + 1) + j;
                        let b = a + n as u32 + 1;
                        triangles.push([a, b, a + 1]);
                        triangles.push([a + 1, b, b + 1]);
                    }
                }
            }
        }
        TriangleMesh::new(vertices, triangles).unwrap()
    }

    #[test]
    fn offset_distance_matches_offset_mesh() {
        let h = 0.5;
        let r = 0.05;
        let n = 240;
        let cube = DistanceIndex::build(&crate::mesh::tests::unit_cube());
        let offset = DistanceIndex::build(&offset_cube_mesh(h, r, n));
        // grid spacing along the surface is at most 2(h+r)/n, and the
        // chord sagitta on a radius-r patch is at most spacing^2 / (8r)
        let step = 2.0 * (h + r) / n as f64;
        let tol = step * step / (8.0 * r) * 2.0 + 1e-12;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut tested = 0;
        while tested < 500 {
            let q = Point3::from(Vector3::from_fn(|_, _| rng.random_range(-0.8..0.8)));
            if q.coords.amax() <= h {
                continue;
            }
            let expected = offset.distance(&q);
            let got = offset_distance(&cube, &q, r);
            assert!((got - expected).abs() <= tol, "{q:?}: {got} vs {expected} (tol {tol})");
            tested += 1;
        }
    }
}
