//! Discrete pose distribution over a superset and the confidence intervals
//! derived from it.
//!
//! Each measurement is modeled as its closest surface point plus isotropic
//! Gaussian noise, so the relative likelihood of a pose is
//! `exp(-sum d_i^2 / 2 sigma^2)`. The distribution is built from `k` uniform
//! samples in every frontier cell. All cells share one resolution, so the
//! strata have equal volume and the normalized likelihoods are the sample
//! probabilities directly.

use alloc::vec::Vec;

use nalgebra::{Isometry3, Point3, Quaternion, Translation3, UnitQuaternion, Vector3, Vector4};
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::init_bound::MeasurementSet;
use crate::pose_search::{align_hemisphere, Fixture, PoseSuperset};
use crate::se3_grid::{rotation_angle, PoseCell};

/// Likelihood scale as a fraction of the measurement bound.
pub const DEFAULT_SIGMA_FRACTION: f64 = 0.3;
pub const DEFAULT_SAMPLES_PER_CELL: usize = 8;
pub const MAX_TOTAL_SAMPLES: usize = 1_000_000;
pub const DEFAULT_CONFIDENCE_LEVELS: [f64; 3] = [0.5, 0.9, 0.99];
/// Below this norm the weighted quaternion mean has no usable direction.
pub const MIN_MEAN_QUATERNION_NORM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DistributionError {
    #[error("the superset has no cells")]
    EmptySuperset,
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("samples per cell must be at least 1")]
    InvalidSampleCount,
    #[error("{samples} samples but {likelihoods} log-likelihoods")]
    LengthMismatch { samples: usize, likelihoods: usize },
    #[error("the distribution has no samples")]
    Empty,
    #[error("rotation ambiguity too large for expected pose")]
    RotationAmbiguity,
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
}

/// Sampling and likelihood settings.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DistributionConfig {
    /// Likelihood scale in meters; `None` means `DEFAULT_SIGMA_FRACTION * b_s`.
    pub sigma: Option<f64>,
    pub samples_per_cell: usize,
    pub max_samples: usize,
    pub seed: u64,
}

impl Default for DistributionConfig {
    fn default() -> Self {
        Self {
            sigma: None,
            samples_per_cell: DEFAULT_SAMPLES_PER_CELL,
            max_samples: MAX_TOTAL_SAMPLES,
            seed: 0,
        }
    }
}

impl DistributionConfig {
    pub fn sigma_for(&self, meas: &MeasurementSet) -> f64 {
        self.sigma.unwrap_or(DEFAULT_SIGMA_FRACTION * meas.sample_bound())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeightedPose {
    pub pose: Isometry3<f64>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiscretePoseDistribution {
    pub samples: Vec<WeightedPose>,
    pub sigma: f64,
    pub k_per_cell: usize,
    /// Set when every likelihood underflowed and the weights fell back to uniform.
    pub uniform_fallback: bool,
}

impl DiscretePoseDistribution {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn most_probable(&self) -> Option<&WeightedPose> {
        self.samples
            .iter()
            .reduce(|a, b| if b.probability > a.probability { b } else { a })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConfidenceReport {
    pub expected_position: Point3<f64>,
    pub expected_rotation: UnitQuaternion<f64>,
    pub levels: Vec<f64>,
    /// Positional radius per level, meters.
    pub position: Vec<f64>,
    /// Geodesic rotation radius per level, radians.
    pub rotation: Vec<f64>,
}

impl ConfidenceReport {
    /// Radii at `level`, if it was requested.
    pub fn at(&self, level: f64) -> Option<(f64, f64)> {
        self.levels
            .iter()
            .position(|&l| (l - level).abs() < 1e-12)
            .map(|i| (self.position[i], self.rotation[i]))
    }
}

/// `-sum_i d_i^2 / (2 sigma^2)` with `d_i` the distance of measurement `i`,
/// mapped into the fixture frame by `pose`, to the measured surface.
pub fn relative_log_likelihood(pose: &Isometry3<f64>, meas: &MeasurementSet, fixture: &Fixture, sigma: f64) -> f64 {
    let inv = pose.inverse();
    let sum: f64 = meas
        .points()
        .iter()
        .map(|p| {
            let d = fixture.distance(&(inv * p));
            d * d
        })
        .sum();
    -sum / (2.0 * sigma * sigma)
}

fn cell_rng(seed: u64, cell: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cell);
    rng
}

fn sample_cell(superset: &PoseSuperset, cell: &PoseCell, k: usize, rng: &mut ChaCha8Rng) -> Vec<Isometry3<f64>> {
    (0..k)
        .map(|_| {
            let rotation = cell.rotation.sample(rng);
            let position = superset.grid.sample(&cell.position, rng);
            Isometry3::from_parts(Translation3::from(position.coords), rotation)
        })
        .collect()
}

/// Per-cell sample count and the cells to sample under a total cap.
/// When the cap allows fewer than one sample per cell, a seeded subset of
/// `max_samples` cells gets one sample each.
fn sampling_plan(cells: usize, k: usize, max_samples: usize, seed: u64) -> (usize, Option<Vec<usize>>) {
    let max_samples = max_samples.max(1);
    if cells.saturating_mul(k) <= max_samples {
        (k, None)
    } else if cells <= max_samples {
        (max_samples / cells, None)
    } else {
        let mut rng = cell_rng(seed, u64::MAX);
        let mut chosen = rand::seq::index::sample(&mut rng, cells, max_samples).into_vec();
        chosen.sort_unstable();
        (1, Some(chosen))
    }
}

/// `k` poses drawn uniformly in every frontier cell, in frontier order. Each
/// cell has its own random stream, so the result does not depend on thread
/// count. Totals above `max_samples` reduce `k`, and if needed the set of
/// cells; the effective `k` is returned with the poses.
pub fn stratified_samples(
    superset: &PoseSuperset,
    k: usize,
    max_samples: usize,
    seed: u64,
) -> Result<(Vec<Isometry3<f64>>, usize), DistributionError> {
    if k == 0 {
        return Err(DistributionError::InvalidSampleCount);
    }
    if superset.is_empty() {
        return Err(DistributionError::EmptySuperset);
    }
    let cells: Vec<PoseCell> = superset.cells().collect();
    let (k_eff, subset) = sampling_plan(cells.len(), k, max_samples, seed);
    let indices: Vec<usize> = subset.unwrap_or_else(|| (0..cells.len()).collect());
    let per_cell = |&i: &usize| sample_cell(superset, &cells[i], k_eff, &mut cell_rng(seed, i as u64));
    #[cfg(feature = "parallel")]
    let nested: Vec<Vec<Isometry3<f64>>> = {
        use rayon::prelude::*;
        indices.par_iter().map(per_cell).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let nested: Vec<Vec<Isometry3<f64>>> = indices.iter().map(per_cell).collect();
    Ok((nested.into_iter().flatten().collect(), k_eff))
}

/// Softmax of the log-likelihoods, shifted by their maximum. Non-finite
/// entries get zero weight; if none is finite the weights are uniform and
/// `uniform_fallback` is set.
pub fn normalize(
    samples: Vec<Isometry3<f64>>,
    log_likelihoods: &[f64],
    sigma: f64,
    k_per_cell: usize,
) -> Result<DiscretePoseDistribution, DistributionError> {
    if samples.len() != log_likelihoods.len() {
        return Err(DistributionError::LengthMismatch {
            samples: samples.len(),
            likelihoods: log_likelihoods.len(),
        });
    }
    if samples.is_empty() {
        return Err(DistributionError::Empty);
    }
    let max = log_likelihoods
        .iter()
        .copied()
        .filter(|l| l.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let uniform_fallback = !max.is_finite();
    let weights: Vec<f64> = if uniform_fallback {
        log::warn!("all pose likelihoods underflowed; using a uniform distribution");
        alloc::vec![1.0; samples.len()]
    } else {
        log_likelihoods
            .iter()
            .map(|&l| if l.is_finite() { (l - max).exp() } else { 0.0 })
            .collect()
    };
    let total: f64 = weights.iter().sum();
    Ok(DiscretePoseDistribution {
        samples: samples
            .into_iter()
            .zip(weights)
            .map(|(pose, w)| WeightedPose {
                pose,
                probability: w / total,
            })
            .collect(),
        sigma,
        k_per_cell,
        uniform_fallback,
    })
}

/// Samples the superset and weighs every sample by its relative likelihood.
pub fn pose_distribution(
    superset: &PoseSuperset,
    fixture: &Fixture,
    meas: &MeasurementSet,
    config: &DistributionConfig,
) -> Result<DiscretePoseDistribution, DistributionError> {
    let sigma = config.sigma_for(meas);
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(DistributionError::InvalidSigma(sigma));
    }
    let (samples, k) = stratified_samples(superset, config.samples_per_cell, config.max_samples, config.seed)?;
    let ll = |pose: &Isometry3<f64>| relative_log_likelihood(pose, meas, fixture, sigma);
    #[cfg(feature = "parallel")]
    let log_likelihoods: Vec<f64> = {
        use rayon::prelude::*;
        samples.par_iter().map(ll).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let log_likelihoods: Vec<f64> = samples.iter().map(ll).collect();
    normalize(samples, &log_likelihoods, sigma, k)
}

/// Probability-weighted mean pose. Quaternions are first moved into the
/// hemisphere of the most probable sample.
pub fn expected_pose(dist: &DiscretePoseDistribution) -> Result<(Point3<f64>, UnitQuaternion<f64>), DistributionError> {
    let reference = dist.most_probable().ok_or(DistributionError::Empty)?.pose.rotation;
    let mut t = Vector3::zeros();
    let mut q = Vector4::zeros();
    for s in &dist.samples {
        t += s.pose.translation.vector * s.probability;
        q += align_hemisphere(&s.pose.rotation, &reference) * s.probability;
    }
    if q.norm() < MIN_MEAN_QUATERNION_NORM {
        return Err(DistributionError::RotationAmbiguity);
    }
    Ok((Point3::from(t), UnitQuaternion::from_quaternion(Quaternion::from(q))))
}

/// Smallest radius whose ball around the center holds at least `level`
/// probability, for each level. `errors` pairs each sample's distance with
/// its probability.
fn mass_radii(mut errors: Vec<(f64, f64)>, levels: &[f64]) -> Vec<f64> {
    errors.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cumulative = Vec::with_capacity(errors.len());
    let mut acc = 0.0;
    for &(_, p) in &errors {
        acc += p;
        cumulative.push(acc);
    }
    levels
        .iter()
        .map(|&level| {
            // tolerate the rounding of the accumulated sum
            let i = cumulative.partition_point(|&c| c < level - 1e-12);
            errors[i.min(errors.len() - 1)].0
        })
        .collect()
}

/// Positional and angular confidence radii around `expected` at `levels`.
pub fn confidence_intervals(
    dist: &DiscretePoseDistribution,
    expected: (Point3<f64>, UnitQuaternion<f64>),
    levels: &[f64],
) -> Result<ConfidenceReport, DistributionError> {
    if dist.is_empty() {
        return Err(DistributionError::Empty);
    }
    if let Some(&bad) = levels.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
        return Err(DistributionError::InvalidLevel(bad));
    }
    let (t, q) = expected;
    let position = mass_radii(
        dist.samples
            .iter()
            .map(|s| ((Point3::from(s.pose.translation.vector) - t).norm(), s.probability))
            .collect(),
        levels,
    );
    let rotation = mass_radii(
        dist.samples
            .iter()
            .map(|s| (rotation_angle(&s.pose.rotation, &q), s.probability))
            .collect(),
        levels,
    );
    Ok(ConfidenceReport {
        expected_position: t,
        expected_rotation: q,
        levels: levels.to_vec(),
        position,
        rotation,
    })
}

/// Expected pose and confidence radii at the default levels.
pub fn confidence_report(dist: &DiscretePoseDistribution) -> Result<ConfidenceReport, DistributionError> {
    let expected = expected_pose(dist)?;
    confidence_intervals(dist, expected, &DEFAULT_CONFIDENCE_LEVELS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init_bound::PositionAABB;
    use crate::pose_search::{compute_superset, SearchConfig};
    use crate::se3_grid::{standard_bound_table, PositionCell, PositionGrid, RotationBoundTable, RotationCell};
    use crate::sim::{builtin_primitive, run_trial, Primitive, SimulationSpec};
    use core::f64::consts::PI;
    use proptest::prelude::*;

    fn pose(t: [f64; 3], q: UnitQuaternion<f64>) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::new(t[0], t[1], t[2]), q)
    }

    fn weighted(entries: &[(Isometry3<f64>, f64)]) -> DiscretePoseDistribution {
        DiscretePoseDistribution {
            samples: entries
                .iter()
                .map(|&(pose, probability)| WeightedPose { pose, probability })
                .collect(),
            sigma: 1.0,
            k_per_cell: 1,
            uniform_fallback: false,
        }
    }

    fn synthetic_superset(cells: Vec<(RotationCell, Vec<PositionCell>)>) -> PoseSuperset {
        PoseSuperset::from_cells(
            PositionGrid {
                min_corner: Point3::new(-0.5, -0.5, -0.5),
                l0: 1.0,
            },
            PositionAABB {
                min: Point3::new(-0.5, -0.5, -0.5),
                max: Point3::new(0.5, 0.5, 0.5),
            },
            RotationBoundTable::compute(2, 1.01).unwrap(),
            cells
                .into_iter()
                .flat_map(|(rotation, ps)| ps.into_iter().map(move |position| PoseCell { rotation, position })),
            None,
        )
        .unwrap()
    }

    fn cube_fixture() -> (Fixture, MeasurementSet) {
        let b = builtin_primitive(Primitive::Cube);
        let fixture = Fixture::new(&b.mesh, 0.0);
        // three points on the +x face and one on the +y face
        let h = 0.125 / 3f64.sqrt();
        let pts = alloc::vec![
            Point3::new(h, 0.0, 0.0),
            Point3::new(h, 0.01, 0.02),
            Point3::new(h, -0.02, 0.01),
            Point3::new(0.0, h, 0.0),
        ];
        (fixture, MeasurementSet::new(pts, 1e-3, 1e-7).unwrap())
    }

    #[test]
    fn likelihood_is_zero_on_the_surface() {
        let (fixture, meas) = cube_fixture();
        let ll = relative_log_likelihood(&Isometry3::identity(), &meas, &fixture, 3e-4);
        assert!(ll.abs() < 1e-12);
    }

    #[test]
    fn one_point_at_sigma_gives_minus_one_half() {
        let (fixture, meas) = cube_fixture();
        let sigma = 3e-4;
        let mut pts = meas.points().to_vec();
        pts[0].x += sigma;
        let moved = MeasurementSet::new(pts, 1e-3, 1e-7).unwrap();
        let ll = relative_log_likelihood(&Isometry3::identity(), &moved, &fixture, sigma);
        assert!((ll + 0.5).abs() < 1e-9);
    }

    #[test]
    fn likelihood_ratio_matches_distance_formula() {
        let (fixture, meas) = cube_fixture();
        let sigma = 1e-3;
        let a = pose([0.001, 0.0, -0.002], UnitQuaternion::from_euler_angles(0.01, 0.0, 0.02));
        let b = pose(
            [-0.002, 0.001, 0.0],
            UnitQuaternion::from_euler_angles(0.0, -0.015, 0.0),
        );
        let sq = |p: &Isometry3<f64>| -> f64 {
            meas.points()
                .iter()
                .map(|x| fixture.distance(&(p.inverse() * x)).powi(2))
                .sum()
        };
        let ratio = (relative_log_likelihood(&a, &meas, &fixture, sigma)
            - relative_log_likelihood(&b, &meas, &fixture, sigma))
        .exp();
        let expected = ((sq(&b) - sq(&a)) / (2.0 * sigma * sigma)).exp();
        assert!((ratio / expected - 1.0).abs() < 1e-9);
    }

    #[test]
    fn softmax_examples() {
        let poses = alloc::vec![Isometry3::identity(); 2];
        let d = normalize(poses.clone(), &[-3.0, -3.0], 1.0, 1).unwrap();
        assert_eq!(d.samples[0].probability, 0.5);
        assert_eq!(d.samples[1].probability, 0.5);
        let d = normalize(poses.clone(), &[0.0, -(3f64.ln())], 1.0, 1).unwrap();
        assert!((d.samples[0].probability - 0.75).abs() < 1e-15);
        assert!((d.samples[1].probability - 0.25).abs() < 1e-15);
        let d = normalize(poses.clone(), &[f64::NEG_INFINITY, f64::NEG_INFINITY], 1.0, 1).unwrap();
        assert!(d.uniform_fallback);
        assert_eq!(d.samples[0].probability, 0.5);
        assert!(matches!(
            normalize(poses, &[0.0], 1.0, 1),
            Err(DistributionError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn very_negative_log_likelihoods_do_not_underflow() {
        let poses = alloc::vec![Isometry3::identity(); 2];
        let d = normalize(poses, &[-1e6, -1e6 - 3f64.ln()], 1.0, 1).unwrap();
        assert!(!d.uniform_fallback);
        assert!((d.samples[0].probability - 0.75).abs() < 1e-9);
    }

    #[test]
    fn expected_pose_examples() {
        let q = UnitQuaternion::from_euler_angles(0.3, -0.2, 1.0);
        let d = weighted(&[(pose([1.0, 2.0, 3.0], q), 1.0)]);
        let (t, r) = expected_pose(&d).unwrap();
        assert!((t - Point3::new(1.0, 2.0, 3.0)).norm() < 1e-15);
        assert!(rotation_angle(&r, &q) < 1e-12);

        let d = weighted(&[(pose([0.0, 0.0, 0.0], q), 0.5), (pose([2.0, 4.0, -2.0], q), 0.5)]);
        assert!((expected_pose(&d).unwrap().0 - Point3::new(1.0, 2.0, -1.0)).norm() < 1e-15);

        let five = 5f64.to_radians();
        let plus = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), five);
        // the second sample given with its opposite-sign quaternion
        let minus =
            UnitQuaternion::new_unchecked(-UnitQuaternion::from_axis_angle(&Vector3::z_axis(), -five).into_inner());
        let d = weighted(&[(pose([0.0; 3], plus), 0.5), (pose([0.0; 3], minus), 0.5)]);
        let (_, r) = expected_pose(&d).unwrap();
        assert!(r.angle() < 1e-12);
    }

    #[test]
    fn expected_rotation_of_orthogonal_quaternions() {
        // quaternions (0,1,0,0) and (0,0,1,0), weights 3:1, average to a unit
        // quaternion along (0,3,1,0)
        let a = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI);
        let b = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), PI);
        let d = weighted(&[(pose([0.0; 3], a), 0.75), (pose([0.0; 3], b), 0.25)]);
        let (_, r) = expected_pose(&d).unwrap();
        let expected = Vector4::new(3.0, 1.0, 0.0, 0.0).normalize();
        assert!((r.coords - expected).norm() < 1e-12);
        assert!(matches!(expected_pose(&weighted(&[])), Err(DistributionError::Empty)));
    }

    #[test]
    fn confidence_interval_examples() {
        let q = UnitQuaternion::identity();
        let d = weighted(&[(pose([1.0, 1.0, 1.0], q), 1.0)]);
        let r = confidence_report(&d).unwrap();
        assert!(r.position.iter().chain(&r.rotation).all(|&x| x < 1e-12));

        let d = weighted(&[(pose([1.0, 0.0, 0.0], q), 0.5), (pose([0.0, 2.0, 0.0], q), 0.5)]);
        let r = confidence_intervals(&d, (Point3::origin(), q), &[0.5, 0.99]).unwrap();
        assert_eq!(r.position, alloc::vec![1.0, 2.0]);
        assert_eq!(r.at(0.99), Some((2.0, 0.0)));

        let z = |deg: f64| UnitQuaternion::from_axis_angle(&Vector3::z_axis(), deg.to_radians());
        let d = weighted(&[(pose([0.0; 3], z(10.0)), 0.6), (pose([0.0; 3], z(-30.0)), 0.4)]);
        let r = confidence_intervals(&d, (Point3::origin(), q), &[0.5, 0.9]).unwrap();
        assert!((r.rotation[0] - 10f64.to_radians()).abs() < 1e-12);
        assert!((r.rotation[1] - 30f64.to_radians()).abs() < 1e-12);
        assert!(matches!(
            confidence_intervals(&d, (Point3::origin(), q), &[1.0]),
            Err(DistributionError::InvalidLevel(_))
        ));
    }

    #[test]
    fn single_cell_sampling() {
        let rot = RotationCell::new(1, 5, 7).unwrap();
        let pos = PositionCell {
            level: 2,
            index: [1, 3, 0],
        };
        let s = synthetic_superset(alloc::vec![(rot, alloc::vec![pos])]);
        let (poses, k) = stratified_samples(&s, 1, MAX_TOTAL_SAMPLES, 3).unwrap();
        assert_eq!((poses.len(), k), (1, 1));
        assert!(s.contains(&poses[0]));
        assert!(matches!(
            stratified_samples(&s, 0, 10, 3),
            Err(DistributionError::InvalidSampleCount)
        ));
    }

    #[test]
    fn samples_stay_in_their_cells() {
        let cells = alloc::vec![
            (
                RotationCell::new(2, 100, 3).unwrap(),
                alloc::vec![
                    PositionCell {
                        level: 3,
                        index: [0, 0, 0]
                    },
                    PositionCell {
                        level: 3,
                        index: [7, 2, 5]
                    }
                ]
            ),
            (
                RotationCell::new(2, 17, 20).unwrap(),
                alloc::vec![PositionCell {
                    level: 3,
                    index: [4, 4, 4]
                }]
            ),
        ];
        let s = synthetic_superset(cells);
        let (poses, k) = stratified_samples(&s, 16, MAX_TOTAL_SAMPLES, 9).unwrap();
        assert_eq!(k, 16);
        let frontier: Vec<PoseCell> = s.cells().collect();
        assert_eq!(poses.len(), 16 * frontier.len());
        for (i, chunk) in poses.chunks(16).enumerate() {
            let cell = &frontier[i];
            for p in chunk {
                assert!(cell.rotation.contains(&p.rotation));
                let located = s.grid.locate(&Point3::from(p.translation.vector), 3).unwrap();
                assert_eq!(located, cell.position);
            }
        }
    }

    #[test]
    fn translation_means_approach_cell_centers() {
        let pos = PositionCell {
            level: 1,
            index: [1, 0, 1],
        };
        let s = synthetic_superset(alloc::vec![(RotationCell::new(0, 0, 0).unwrap(), alloc::vec![pos])]);
        let side = s.grid.side(1);
        let center = s.grid.center(&pos);
        let k = 64;
        let mut outside = 0;
        for seed in 0..200 {
            let (poses, _) = stratified_samples(&s, k, MAX_TOTAL_SAMPLES, seed).unwrap();
            let mean: Vector3<f64> = poses.iter().map(|p| p.translation.vector).sum::<Vector3<f64>>() / k as f64;
            // 3 standard deviations of a uniform mean per axis
            let tol = 3.0 * side / (12.0 * k as f64).sqrt();
            if (mean - center.coords).iter().any(|d| d.abs() > tol) {
                outside += 1;
            }
        }
        // expected rate is about 3 * 0.27%
        assert!(outside <= 6, "{outside}");
    }

    #[test]
    fn sample_cap_reduces_k_then_cells() {
        assert_eq!(sampling_plan(10, 8, 1000, 0), (8, None));
        assert_eq!(sampling_plan(100, 8, 500, 0), (5, None));
        let (k, subset) = sampling_plan(1000, 8, 300, 0);
        assert_eq!(k, 1);
        let subset = subset.unwrap();
        assert_eq!(subset.len(), 300);
        assert!(subset.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sampling_plan(1000, 8, 300, 0).1.unwrap(), subset);
    }

    #[test]
    fn simulated_distribution_is_normalized_and_deterministic() {
        let table = standard_bound_table();
        let b = builtin_primitive(Primitive::Bracket);
        let spec = SimulationSpec {
            seed: 21,
            ..SimulationSpec::default()
        };
        let t = run_trial(&b.mesh, &spec).unwrap();
        let fixture = Fixture::new(&b.mesh, 0.0);
        let config = SearchConfig {
            cell_budget: 300_000,
            ..SearchConfig::default()
        };
        let s = compute_superset(&fixture, &t.measurements, &table, &config).unwrap();
        let dc = DistributionConfig {
            seed: 4,
            ..DistributionConfig::default()
        };
        let d = pose_distribution(&s, &fixture, &t.measurements, &dc).unwrap();
        assert_eq!(d.len(), 8 * s.cell_count());
        let total: f64 = d.samples.iter().map(|w| w.probability).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(d.samples.iter().all(|w| w.probability >= 0.0));
        assert_eq!(d, pose_distribution(&s, &fixture, &t.measurements, &dc).unwrap());
        assert!((d.sigma - 3e-4).abs() < 1e-18);
        let r = confidence_report(&d).unwrap();
        assert!(r.position.windows(2).all(|w| w[0] <= w[1]));
        assert!(r.rotation.windows(2).all(|w| w[0] <= w[1]));
    }

    proptest! {
        #[test]
        fn softmax_is_shift_invariant(
            ll in proptest::collection::vec(-50.0f64..0.0, 1..20),
            shift in -1e3f64..1e3,
        ) {
            let poses = alloc::vec![Isometry3::identity(); ll.len()];
            let a = normalize(poses.clone(), &ll, 1.0, 1).unwrap();
            let shifted: Vec<f64> = ll.iter().map(|l| l + shift).collect();
            let b = normalize(poses, &shifted, 1.0, 1).unwrap();
            let sum: f64 = a.samples.iter().map(|s| s.probability).sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            for (x, y) in a.samples.iter().zip(&b.samples) {
                prop_assert!((x.probability - y.probability).abs() < 1e-9);
            }
        }

        #[test]
        fn confidence_radii_are_monotone(
            entries in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.01f64..1.0), 1..30),
            mut levels in proptest::collection::vec(0.01f64..0.99, 1..6),
        ) {
            levels.sort_by(f64::total_cmp);
            let total: f64 = entries.iter().map(|e| e.3).sum();
            let d = weighted(
                &entries
                    .iter()
                    .map(|&(x, y, a, w)| {
                        (pose([x, y, 0.0], UnitQuaternion::from_axis_angle(&Vector3::z_axis(), a)), w / total)
                    })
                    .collect::<Vec<_>>(),
            );
            let r = confidence_report(&d).unwrap();
            let c = confidence_intervals(&d, (r.expected_position, r.expected_rotation), &levels).unwrap();
            prop_assert!(c.position.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(c.rotation.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
