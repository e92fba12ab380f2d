//! Initial positional bound.
//!
//! The fixture origin sits at the center of its enclosing sphere, so every
//! measured point lies within `R = r + b_s` of the true translation. The
//! feasible translations are the intersection of the balls of radius `R`
//! around the points; its axis-aligned box comes from six linear objectives
//! over that intersection, each a tiny second-order cone program solved with
//! a log-barrier interior-point method.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Point3, Vector3};
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::miniball::min_enclosing_sphere;

/// Default numeric slack `b_eps` added to every per-sample bound.
pub const DEFAULT_NUMERIC_SLACK: f64 = 1e-7;

/// Outward expansion of every box face, absorbing solver tolerance.
pub const FACE_EXPANSION: f64 = 1e-7;

/// Phase-1 tolerance: the balls count as intersecting if the smallest
/// enclosing sphere of the centers exceeds `R` by at most this much.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-7;

const GAP_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeasurementError {
    #[error("measurement set is empty")]
    Empty,
    #[error("measurement {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("sample bound must be positive and finite, got {0}")]
    SampleBound(f64),
    #[error("numeric slack must be positive and finite, got {0}")]
    NumericSlack(f64),
}

/// Probed points in the robot base frame with their error bound.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeasurementSet {
    points: Vec<Point3<f64>>,
    sample_bound: f64,
    numeric_slack: f64,
}

impl MeasurementSet {
    pub fn new(points: Vec<Point3<f64>>, sample_bound: f64, numeric_slack: f64) -> Result<Self, MeasurementError> {
        if points.is_empty() {
            return Err(MeasurementError::Empty);
        }
        if let Some(i) = points.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(MeasurementError::NonFinite(i));
        }
        if !(sample_bound > 0.0 && sample_bound.is_finite()) {
            return Err(MeasurementError::SampleBound(sample_bound));
        }
        if !(numeric_slack > 0.0 && numeric_slack.is_finite()) {
            return Err(MeasurementError::NumericSlack(numeric_slack));
        }
        Ok(Self {
            points,
            sample_bound,
            numeric_slack,
        })
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `b_s`.
    pub fn sample_bound(&self) -> f64 {
        self.sample_bound
    }

    /// `b_eps`.
    pub fn numeric_slack(&self) -> f64 {
        self.numeric_slack
    }

    pub fn with_numeric_slack(mut self, numeric_slack: f64) -> Result<Self, MeasurementError> {
        if !(numeric_slack > 0.0 && numeric_slack.is_finite()) {
            return Err(MeasurementError::NumericSlack(numeric_slack));
        }
        self.numeric_slack = numeric_slack;
        Ok(self)
    }
}

/// Box containing every feasible fixture translation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PositionAABB {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl PositionAABB {
    /// `t_hat`.
    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    /// `b_t`.
    pub fn half_diagonal(&self) -> f64 {
        (self.max - self.min).norm() / 2.0
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SocpError {
    #[error("no constraints given")]
    Empty,
    #[error("balls do not intersect: enclosing radius of centers exceeds the ball radius by {excess} m")]
    Infeasible { excess: f64 },
    #[error("interior-point method did not converge")]
    NotConverged,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InitBoundError {
    #[error("measurements inconsistent with fixture radius: no translation within {radius} m of every point (short by {excess} m)")]
    Inconsistent { radius: f64, excess: f64 },
}

/// Smallest enclosing sphere of the centers, or an infeasibility error.
fn phase_one(centers: &[Point3<f64>], radius: f64) -> Result<(Point3<f64>, f64), SocpError> {
    let sphere = min_enclosing_sphere(centers).map_err(|_| SocpError::Empty)?;
    if sphere.radius > radius + FEASIBILITY_TOLERANCE {
        return Err(SocpError::Infeasible {
            excess: sphere.radius - radius,
        });
    }
    Ok((sphere.center, sphere.radius))
}

/// Result of one linear objective over the ball intersection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocpSolution {
    /// Strictly feasible near-optimal point.
    pub point: Point3<f64>,
    /// Certified lower bound on the optimal objective from the dual.
    pub lower_bound: f64,
}

impl SocpSolution {
    pub fn gap(&self, direction: &Vector3<f64>) -> f64 {
        direction.dot(&self.point.coords) - self.lower_bound
    }
}

/// Minimizes `direction . t` subject to `|t - c_i| <= radius` for all centers.
pub fn socp_min(direction: &Vector3<f64>, centers: &[Point3<f64>], radius: f64) -> Result<Point3<f64>, SocpError> {
    socp_solve(direction, centers, radius).map(|s| s.point)
}

/// Like [`socp_min`], also returning the dual lower bound.
pub fn socp_solve(direction: &Vector3<f64>, centers: &[Point3<f64>], radius: f64) -> Result<SocpSolution, SocpError> {
    let (start, rho) = phase_one(centers, radius)?;
    // a nearly empty interior gives the barrier nothing to work with; the
    // slightly larger radius keeps the result a superset
    let radius = if rho > radius - 1e-7 { rho + 2e-7 } else { radius };
    barrier_solve(direction, centers, radius, start)
}

/// Lagrange dual of `min c.t s.t. |t - p_i|^2 <= r^2` at multipliers `lambda`.
fn dual_bound(c: &Vector3<f64>, centers: &[Point3<f64>], r2: f64, lambda: &[f64]) -> f64 {
    let total: f64 = lambda.iter().sum();
    if !(total > 0.0) {
        return f64::NEG_INFINITY;
    }
    let mut weighted = Vector3::zeros();
    for (p, l) in centers.iter().zip(lambda) {
        weighted += p.coords * *l;
    }
    let t = Point3::from((weighted - c / 2.0) / total);
    let mut g = c.dot(&t.coords);
    for (p, l) in centers.iter().zip(lambda) {
        g += l * ((t - p).norm_squared() - r2);
    }
    g
}

fn barrier_solve(
    c: &Vector3<f64>,
    centers: &[Point3<f64>],
    radius: f64,
    start: Point3<f64>,
) -> Result<SocpSolution, SocpError> {
    let r2 = radius * radius;
    // barrier objective change from `t` to `t + step`, evaluated as a
    // difference so it stays accurate once tau is large
    let change = |t: &Point3<f64>, step: &Vector3<f64>, tau: f64| -> Option<f64> {
        let mut v = tau * c.dot(step);
        for p in centers {
            let before = r2 - (t - p).norm_squared();
            let after = r2 - (t + step - p).norm_squared();
            if after <= 0.0 {
                return None;
            }
            v -= (after / before).ln();
        }
        Some(v)
    };

    let mut t = start;
    let mut tau = 1.0 / radius;
    let mut best = SocpSolution {
        point: t,
        lower_bound: f64::NEG_INFINITY,
    };
    let mut lambda = Vec::with_capacity(centers.len());
    for _ in 0..40 {
        for _ in 0..100 {
            let mut grad = c * tau;
            let mut hess = Matrix3::zeros();
            for p in centers {
                let d = t - p;
                let s = r2 - d.norm_squared();
                grad += d * (2.0 / s);
                hess += Matrix3::identity() * (2.0 / s) + d * d.transpose() * (4.0 / (s * s));
            }
            let Some(step) = hess.cholesky().map(|ch| -ch.solve(&grad)) else {
                break;
            };
            let decrement = -grad.dot(&step);
            if decrement / 2.0 < 1e-12 {
                break;
            }
            let mut alpha = 1.0;
            while alpha > 1e-12 {
                if let Some(df) = change(&t, &(step * alpha), tau) {
                    if df <= -0.25 * alpha * decrement {
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let moved = t + step * alpha;
            if alpha <= 1e-12 || moved == t {
                // stalled at double precision
                break;
            }
            t = moved;
        }
        // multipliers 1 / (tau s_i) are dual feasible at any iterate; the
        // dual value is a valid lower bound however well t is centered
        lambda.clear();
        lambda.extend(centers.iter().map(|p| 1.0 / (tau * (r2 - (t - p).norm_squared()))));
        let lower = dual_bound(c, centers, r2, &lambda);
        if lower > best.lower_bound {
            best.lower_bound = lower;
        }
        best.point = t;
        if best.gap(c) < GAP_TOLERANCE {
            return Ok(best);
        }
        tau *= 10.0;
    }
    if best.gap(c) < 1e-9 {
        Ok(best)
    } else {
        Err(SocpError::NotConverged)
    }
}

/// Bounding box of the intersection of balls of radius `fixture_radius + b_s`
/// around the measurements, with every face pushed out by [`FACE_EXPANSION`].
pub fn feasible_aabb(meas: &MeasurementSet, fixture_radius: f64) -> Result<PositionAABB, InitBoundError> {
    let radius = fixture_radius + meas.sample_bound();
    let centers = meas.points();
    if let Err(SocpError::Infeasible { excess }) = phase_one(centers, radius) {
        return Err(InitBoundError::Inconsistent { radius, excess });
    }

    let mut min = Point3::origin();
    let mut max = Point3::origin();
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            let mut dir = Vector3::zeros();
            dir[axis] = sign;
            let face = single_ball_face(centers, radius, axis, sign);
            let value = match socp_solve(&dir, centers, radius) {
                // lower bound on sign * t[axis]; never looser than one ball
                Ok(sol) if sign > 0.0 => sol.lower_bound.max(face),
                Ok(sol) => (-sol.lower_bound).min(face),
                Err(e) => {
                    log::warn!("box face solve failed ({e}); using the single-ball bound");
                    face
                }
            };
            if sign > 0.0 {
                min[axis] = value - FACE_EXPANSION;
            } else {
                max[axis] = value + FACE_EXPANSION;
            }
        }
    }
    Ok(PositionAABB { min, max })
}

/// Tightest face of a single ball: lowest feasible coordinate for `sign > 0`,
/// highest for `sign < 0`.
fn single_ball_face(centers: &[Point3<f64>], radius: f64, axis: usize, sign: f64) -> f64 {
    if sign > 0.0 {
        centers
            .iter()
            .map(|p| p[axis] - radius)
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        centers.iter().map(|p| p[axis] + radius).fold(f64::INFINITY, f64::min)
    }
}
