//! Smallest enclosing balls in `D` dimensions.
//!
//! Welzl's randomized algorithm in the iterative move-to-front form: the input
//! is shuffled with a fixed seed, so the result is a deterministic function of
//! the point list. Three dimensions are used for fixture radii and positional
//! bounds, four for averaging quaternions.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Point3, SVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seed of the shuffle that precedes the incremental construction.
pub const DEFAULT_SHUFFLE_SEED: u64 = 0x5eed_ba11;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ball<const D: usize> {
    pub center: SVector<f64, D>,
    pub radius: f64,
}

impl<const D: usize> Ball<D> {
    fn contains(&self, p: &SVector<f64, D>) -> bool {
        if self.radius < 0.0 {
            return false;
        }
        // relative slack absorbs rounding in the support-set circumcenter
        let r = self.radius * (1.0 + 1e-12) + 1e-15;
        (p - self.center).norm_squared() <= r * r
    }
}

/// Sphere in 3-space; the fixture radius is the radius of the mesh's sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingSphere {
    pub center: Point3<f64>,
    pub radius: f64,
}

impl BoundingSphere {
    pub fn contains(&self, p: &Point3<f64>, slack: f64) -> bool {
        (p - self.center).norm() <= self.radius + slack
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("cannot enclose an empty point set")]
pub struct EmptyInput;

/// Smallest sphere containing all `points`.
pub fn min_enclosing_sphere(points: &[Point3<f64>]) -> Result<BoundingSphere, EmptyInput> {
    let coords: Vec<SVector<f64, 3>> = points.iter().map(|p| p.coords).collect();
    let ball = min_enclosing_ball(&coords, DEFAULT_SHUFFLE_SEED)?;
    Ok(BoundingSphere {
        center: Point3::from(ball.center),
        radius: ball.radius,
    })
}

/// Smallest ball containing all `points`, in any dimension.
pub fn min_enclosing_ball<const D: usize>(points: &[SVector<f64, D>], seed: u64) -> Result<Ball<D>, EmptyInput> {
    if points.is_empty() {
        return Err(EmptyInput);
    }
    let mut pts = points.to_vec();
    pts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut support = Vec::with_capacity(D + 1);
    let n = pts.len();
    Ok(move_to_front(&mut pts, n, &mut support))
}

fn move_to_front<const D: usize>(
    pts: &mut [SVector<f64, D>],
    end: usize,
    support: &mut Vec<SVector<f64, D>>,
) -> Ball<D> {
    let mut ball = circumball(support);
    if support.len() == D + 1 {
        return ball;
    }
    for i in 0..end {
        if !ball.contains(&pts[i]) {
            support.push(pts[i]);
            ball = move_to_front(pts, i, support);
            support.pop();
            pts[..=i].rotate_right(1);
        }
    }
    ball
}

/// Smallest ball with every support point on its boundary: the circumcenter
/// within the affine hull of the support.
fn circumball<const D: usize>(support: &[SVector<f64, D>]) -> Ball<D> {
    match support.len() {
        0 => Ball {
            center: SVector::zeros(),
            radius: -1.0,
        },
        1 => Ball {
            center: support[0],
            radius: 0.0,
        },
        k => {
            let origin = support[0];
            let dirs: Vec<SVector<f64, D>> = support[1..].iter().map(|p| p - origin).collect();
            let m = k - 1;
            let gram = DMatrix::from_fn(m, m, |i, j| 2.0 * dirs[i].dot(&dirs[j]));
            let rhs = DVector::from_fn(m, |i, _| dirs[i].norm_squared());
            match gram.lu().solve(&rhs) {
                Some(lambda) if lambda.iter().all(|l| l.is_finite()) => {
                    let mut offset = SVector::<f64, D>::zeros();
                    for (l, d) in lambda.iter().zip(&dirs) {
                        offset += d * *l;
                    }
                    let center = origin + offset;
                    let radius = support.iter().map(|p| (p - center).norm()).fold(0.0, f64::max);
                    Ball { center, radius }
                }
                // affinely dependent support: fall back to a ball that still
                // contains every support point
                _ => diameter_ball(support),
            }
        }
    }
}

fn diameter_ball<const D: usize>(support: &[SVector<f64, D>]) -> Ball<D> {
    let mut best = (0, 0, -1.0);
    for i in 0..support.len() {
        for j in i + 1..support.len() {
            let d = (support[i] - support[j]).norm_squared();
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    let center = (support[best.0] + support[best.1]) * 0.5;
    let radius = support.iter().map(|p| (p - center).norm()).fold(0.0, f64::max);
    Ball { center, radius }
}
