//! Hierarchical grid on SE(3) and its discretization-error bounds.
//!
//! Positions live in an octree below a single root cube. Rotations use a
//! HEALPix grid on the direction of the rotated z-axis crossed with a grid on
//! the tilt about that axis: 12 base pixels times 6 tilt bins gives the 72
//! level-0 cells, and each refinement splits a cell into 4 child pixels times
//! 2 tilt halves.
//!
//! A rotation with direction `d` in base pixel `b` and tilt `psi` is
//! `S_b(d) * Rz(psi)`, where the section `S_b` is the minimal swing from the
//! base pixel center `c_b` to `d` applied after a fixed rotation taking z to
//! `c_b`. No section of the fibration is parallel, so two directions in one
//! pixel disagree on "zero tilt" by a twist angle. The bound table measures
//! the largest such twist per level and adds it to the tilt half-width before
//! combining it with the pixel radius; without it the angular bound would not
//! hold for cells far from their chart's center.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Isometry3, Point3, Quaternion, Translation3, UnitQuaternion, Vector3};
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;

use crate::healpix;

/// Tilt bins at level 0.
pub const BASE_TILT_BINS: u64 = 6;

/// Deepest rotation level the bound table supports.
pub const MAX_ROTATION_LEVEL: u8 = 10;

/// Deepest position level; cell indices are packed into 21 bits per axis.
pub const MAX_POSITION_LEVEL: u8 = 21;

/// Default multiplier on the sampled pixel radius and twist.
pub const DEFAULT_SAFETY_FACTOR: f64 = 1.01;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("rotation level {0} exceeds the maximum of {MAX_ROTATION_LEVEL}")]
    RotationLevel(u8),
    #[error("position level {0} exceeds the maximum of {MAX_POSITION_LEVEL}")]
    PositionLevel(u8),
    #[error("cell index out of range for its level")]
    IndexOutOfRange,
}

// ── Scalar bounds ───────────────────────────────────────────────────────────

/// Largest distance from a cube center to any point of a level-`level` cube
/// when the root cube has side `l0`.
pub fn position_bound(level: u8, l0: f64) -> f64 {
    3f64.sqrt() * l0 / (1u64 << (level as u32 + 1)) as f64
}

/// Largest rotation angle of `Rx(a) * Rz(b)` over `a <= theta`, `b <= phi`.
pub fn gamma_bound(theta: f64, phi: f64) -> f64 {
    let ca = theta.min(PI).cos();
    let cb = phi.min(PI).cos();
    ((cb + ca * cb + ca - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

/// How far a point at distance at most `sample_dist + b_t` from the rotation
/// center can move under a rotation of angle `gamma`.
pub fn rotation_point_bound(gamma: f64, sample_dist: f64, b_t: f64) -> f64 {
    // chord length 2 sin(gamma / 2) = sqrt(2 - 2 cos gamma), stable near zero
    (sample_dist + b_t) * 2.0 * (gamma.min(PI) / 2.0).sin()
}

/// Geodesic distance on SO(3).
pub fn rotation_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    // atan2 form stays accurate for nearly equal rotations, where acos does not
    let rel = a.inverse() * b;
    2.0 * rel.imag().norm().atan2(rel.w.abs())
}

// ── Positions ───────────────────────────────────────────────────────────────

/// The level-0 cube; every position cell is a dyadic sub-cube of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionGrid {
    pub min_corner: Point3<f64>,
    pub l0: f64,
}

impl PositionGrid {
    /// Cube with side equal to the box's largest extent, centered on the box.
    pub fn enclosing(min: &Point3<f64>, max: &Point3<f64>) -> Self {
        let extent = max - min;
        let l0 = extent.max().max(f64::MIN_POSITIVE);
        let center = nalgebra::center(min, max);
        Self {
            min_corner: center - Vector3::repeat(l0 / 2.0),
            l0,
        }
    }

    pub fn side(&self, level: u8) -> f64 {
        self.l0 / (1u64 << level) as f64
    }

    pub fn bound(&self, level: u8) -> f64 {
        position_bound(level, self.l0)
    }

    pub fn center(&self, cell: &PositionCell) -> Point3<f64> {
        let side = self.side(cell.level);
        self.min_corner + Vector3::from(cell.index.map(|i| (i as f64 + 0.5) * side))
    }

    /// Cell at `level` containing `p`, or `None` outside the root cube.
    pub fn locate(&self, p: &Point3<f64>, level: u8) -> Option<PositionCell> {
        let n = 1u64 << level;
        let rel = (p - self.min_corner) / self.side(level);
        let mut index = [0u32; 3];
        for k in 0..3 {
            if !(rel[k] >= 0.0 && rel[k] <= n as f64) {
                return None;
            }
            index[k] = (rel[k].floor() as u64).min(n - 1) as u32;
        }
        Some(PositionCell { level, index })
    }

    pub fn sample(&self, cell: &PositionCell, rng: &mut impl Rng) -> Point3<f64> {
        let side = self.side(cell.level);
        let lo = self.min_corner + Vector3::from(cell.index.map(|i| i as f64 * side));
        lo + Vector3::new(rng.random::<f64>(), rng.random(), rng.random()) * side
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PositionCell {
    pub level: u8,
    pub index: [u32; 3],
}

impl PositionCell {
    pub const ROOT: Self = Self {
        level: 0,
        index: [0; 3],
    };

    pub fn children(&self) -> Result<[PositionCell; 8], GridError> {
        if self.level >= MAX_POSITION_LEVEL {
            return Err(GridError::PositionLevel(self.level + 1));
        }
        let [x, y, z] = self.index.map(|i| 2 * i);
        Ok(core::array::from_fn(|k| PositionCell {
            level: self.level + 1,
            index: [x + (k & 1) as u32, y + ((k >> 1) & 1) as u32, z + (k >> 2) as u32],
        }))
    }

    /// 63-bit key; ordering matches `index` lexicographically within a level.
    pub fn pack(&self) -> u64 {
        let [x, y, z] = self.index.map(u64::from);
        (x << 42) | (y << 21) | z
    }

    pub fn unpack(level: u8, key: u64) -> Self {
        const MASK: u64 = (1 << 21) - 1;
        Self {
            level,
            index: [(key >> 42) as u32, ((key >> 21) & MASK) as u32, (key & MASK) as u32],
        }
    }
}

// ── Rotations ───────────────────────────────────────────────────────────────

/// Minimal rotation taking unit vector `a` to unit vector `b`.
fn swing(a: &Vector3<f64>, b: &Vector3<f64>) -> UnitQuaternion<f64> {
    let w = 1.0 + a.dot(b);
    let v = a.cross(b);
    UnitQuaternion::new_normalize(Quaternion::new(w, v.x, v.y, v.z))
}

/// Rotation angle of `q` about `axis` in its swing-twist decomposition,
/// wrapped to `(-pi, pi]`.
fn twist_about(q: &UnitQuaternion<f64>, axis: &Vector3<f64>) -> f64 {
    let along = q.imag().dot(axis);
    let w = q.w;
    let t = 2.0 * (along * w.signum()).atan2(w.abs());
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

fn base_center(face: u8) -> Vector3<f64> {
    healpix::center(0, face as u64)
}

/// Chart section for base pixel `face`: rotates z onto `d` without tilt.
fn section(face: u8, d: &Vector3<f64>) -> UnitQuaternion<f64> {
    let c = base_center(face);
    swing(&c, d) * swing(&Vector3::z(), &c)
}

fn tilt_rotation(psi: f64) -> UnitQuaternion<f64> {
    let (s, c) = (psi / 2.0).sin_cos();
    UnitQuaternion::new_unchecked(Quaternion::new(c, 0.0, 0.0, s))
}

/// Rotation with rotated z-axis at face coordinates `(x, y)` of `face` and tilt `psi`.
pub fn rotation_from_coordinates(face: u8, x: f64, y: f64, psi: f64) -> UnitQuaternion<f64> {
    let d = healpix::xyf_to_vec(x, y, face);
    section(face, &d) * tilt_rotation(psi)
}

pub fn tilt_bins(level: u8) -> u64 {
    BASE_TILT_BINS << level
}

pub fn tilt_width(level: u8) -> f64 {
    2.0 * PI / tilt_bins(level) as f64
}

/// One cell of the rotation grid: a HEALPix pixel times a tilt interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RotationCell {
    pub level: u8,
    /// Nested HEALPix index at `level`, base face in the top bits.
    pub pixel: u64,
    pub tilt: u32,
}

impl RotationCell {
    pub fn new(level: u8, pixel: u64, tilt: u32) -> Result<Self, GridError> {
        if level > MAX_ROTATION_LEVEL {
            return Err(GridError::RotationLevel(level));
        }
        if pixel >= healpix::pixel_count(level) || tilt as u64 >= tilt_bins(level) {
            return Err(GridError::IndexOutOfRange);
        }
        Ok(Self { level, pixel, tilt })
    }

    /// The 72 level-0 cells.
    pub fn level_zero() -> impl Iterator<Item = RotationCell> {
        (0..healpix::BASE_PIXELS)
            .flat_map(|pixel| (0..BASE_TILT_BINS as u32).map(move |tilt| RotationCell { level: 0, pixel, tilt }))
    }

    pub fn face(&self) -> u8 {
        (self.pixel >> (2 * self.level as u32)) as u8
    }

    /// Center rotation of the cell.
    pub fn center(&self) -> UnitQuaternion<f64> {
        let (ix, iy, face) = healpix::nested_to_xyf(self.level, self.pixel);
        let ns = healpix::nside(self.level) as f64;
        let psi = (self.tilt as f64 + 0.5) * tilt_width(self.level);
        rotation_from_coordinates(face, (ix as f64 + 0.5) / ns, (iy as f64 + 0.5) / ns, psi)
    }

    /// The 8 cells one level deeper: 4 child pixels times 2 tilt halves.
    pub fn children(&self) -> Result<[RotationCell; 8], GridError> {
        if self.level >= MAX_ROTATION_LEVEL {
            return Err(GridError::RotationLevel(self.level + 1));
        }
        let pixels = healpix::children(self.pixel);
        Ok(core::array::from_fn(|k| RotationCell {
            level: self.level + 1,
            pixel: pixels[k / 2],
            tilt: 2 * self.tilt + (k % 2) as u32,
        }))
    }

    /// The level-`level` cell containing `rotation`.
    pub fn locate(rotation: &UnitQuaternion<f64>, level: u8) -> Result<Self, GridError> {
        if level > MAX_ROTATION_LEVEL {
            return Err(GridError::RotationLevel(level));
        }
        let d = rotation * Vector3::z();
        let pixel = healpix::locate(level, &d);
        let face = (pixel >> (2 * level as u32)) as u8;
        let residual = section(face, &d).inverse() * rotation;
        let mut psi = twist_about(&residual, &Vector3::z());
        if psi < 0.0 {
            psi += 2.0 * PI;
        }
        let bins = tilt_bins(level);
        let tilt = ((psi / tilt_width(level)).floor() as u64).min(bins - 1) as u32;
        Ok(Self { level, pixel, tilt })
    }

    pub fn contains(&self, rotation: &UnitQuaternion<f64>) -> bool {
        Self::locate(rotation, self.level).is_ok_and(|c| c == *self)
    }

    /// Uniform (Haar) sample from the cell.
    pub fn sample(&self, rng: &mut impl Rng) -> UnitQuaternion<f64> {
        let (ix, iy, face) = healpix::nested_to_xyf(self.level, self.pixel);
        let ns = healpix::nside(self.level) as f64;
        let x = (ix as f64 + rng.random::<f64>()) / ns;
        let y = (iy as f64 + rng.random::<f64>()) / ns;
        let psi = (self.tilt as f64 + rng.random::<f64>()) * tilt_width(self.level);
        rotation_from_coordinates(face, x, y, psi)
    }

    /// 40-bit key: pixel then tilt.
    pub fn pack(&self) -> u64 {
        (self.pixel << 16) | self.tilt as u64
    }

    pub fn unpack(level: u8, key: u64) -> Self {
        Self {
            level,
            pixel: key >> 16,
            tilt: (key & 0xFFFF) as u32,
        }
    }
}

/// Product cell of the SE(3) grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PoseCell {
    pub rotation: RotationCell,
    pub position: PositionCell,
}

impl PoseCell {
    pub fn center(&self, grid: &PositionGrid) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(grid.center(&self.position).coords),
            self.rotation.center(),
        )
    }
}

// ── Rotation bound table ────────────────────────────────────────────────────

/// Per-level angular bounds of the rotation grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RotationBoundTable {
    pub safety_factor: f64,
    /// Largest center-to-boundary angle over all pixels, times the safety factor.
    pub theta: Vec<f64>,
    /// Half of the tilt bin width.
    pub phi: Vec<f64>,
    /// Largest chart twist between a pixel center and its boundary, times the
    /// safety factor.
    pub twist: Vec<f64>,
    /// `gamma_bound(theta, phi + twist)`.
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct PixelExtent {
    radius: f64,
    twist: f64,
}

/// Boundary samples per pixel edge at `level`; 2500 per edge at level 0.
fn edge_samples(level: u8) -> usize {
    (2500usize >> (2 * level as usize).min(60)).max(8)
}

fn pixel_extent(level: u8, face: u8, ix: u64, iy: u64, per_edge: usize) -> PixelExtent {
    let ns = healpix::nside(level) as f64;
    let cb = base_center(face);
    let dc = healpix::xyf_to_vec((ix as f64 + 0.5) / ns, (iy as f64 + 0.5) / ns, face);
    let center_swing_inv = swing(&cb, &dc).inverse();
    let mut out = PixelExtent::default();
    let (x0, y0) = (ix as f64, iy as f64);
    for edge in 0..4 {
        for j in 0..per_edge {
            let t = j as f64 / per_edge as f64;
            let (u, v) = match edge {
                0 => (x0 + t, y0),
                1 => (x0 + 1.0, y0 + t),
                2 => (x0 + 1.0 - t, y0 + 1.0),
                _ => (x0, y0 + 1.0 - t),
            };
            let d = healpix::xyf_to_vec(u / ns, v / ns, face);
            let angle = dc.cross(&d).norm().atan2(dc.dot(&d));
            let twist = twist_about(&(center_swing_inv * swing(&cb, &d)), &cb).abs();
            out.radius = out.radius.max(angle);
            out.twist = out.twist.max(twist);
        }
    }
    out
}

/// Worst pixel at `level` over the given faces, visiting only `ix <= iy`
/// when `mirror` is set (the face is symmetric under swapping x and y).
fn level_extent(level: u8, faces: &[u8], mirror: bool) -> PixelExtent {
    let ns = healpix::nside(level);
    let per_edge = edge_samples(level);
    let row = |face: u8, iy: u64| {
        let mut acc = PixelExtent::default();
        let end = if mirror { iy + 1 } else { ns };
        for ix in 0..end {
            let e = pixel_extent(level, face, ix, iy, per_edge);
            acc.radius = acc.radius.max(e.radius);
            acc.twist = acc.twist.max(e.twist);
        }
        acc
    };
    let mut worst = PixelExtent::default();
    for &face in faces {
        #[cfg(feature = "parallel")]
        let per_row: Vec<PixelExtent> = {
            use rayon::prelude::*;
            (0..ns).into_par_iter().map(|iy| row(face, iy)).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let per_row: Vec<PixelExtent> = (0..ns).map(|iy| row(face, iy)).collect();
        for e in per_row {
            worst.radius = worst.radius.max(e.radius);
            worst.twist = worst.twist.max(e.twist);
        }
    }
    worst
}

impl RotationBoundTable {
    /// Samples every pixel boundary up to `max_level`.
    ///
    /// The grid is invariant under quarter turns about z and under the
    /// equatorial mirror, and each face is symmetric about its central
    /// meridian, so one north and one equatorial face, half of each, cover
    /// every pixel shape.
    pub fn compute(max_level: u8, safety_factor: f64) -> Result<Self, GridError> {
        if max_level > MAX_ROTATION_LEVEL {
            return Err(GridError::RotationLevel(max_level));
        }
        let mut table = Self {
            safety_factor,
            theta: Vec::new(),
            phi: Vec::new(),
            twist: Vec::new(),
            gamma: Vec::new(),
        };
        for level in 0..=max_level {
            let e = level_extent(level, &[0, 4], true);
            table.push_level(level, e);
        }
        Ok(table)
    }

    /// Same as [`compute`](Self::compute) but visits every pixel of every face.
    pub fn compute_exhaustive(max_level: u8, safety_factor: f64) -> Result<Self, GridError> {
        if max_level > MAX_ROTATION_LEVEL {
            return Err(GridError::RotationLevel(max_level));
        }
        let mut table = Self {
            safety_factor,
            theta: Vec::new(),
            phi: Vec::new(),
            twist: Vec::new(),
            gamma: Vec::new(),
        };
        let faces: Vec<u8> = (0..12).collect();
        for level in 0..=max_level {
            let e = level_extent(level, &faces, false);
            table.push_level(level, e);
        }
        Ok(table)
    }

    fn push_level(&mut self, level: u8, e: PixelExtent) {
        let theta = e.radius * self.safety_factor;
        let twist = e.twist * self.safety_factor;
        let phi = PI / tilt_bins(level) as f64;
        self.theta.push(theta);
        self.twist.push(twist);
        self.phi.push(phi);
        self.gamma.push(gamma_bound(theta, phi + twist));
    }

    pub fn max_level(&self) -> u8 {
        (self.gamma.len() - 1) as u8
    }

    pub fn gamma(&self, level: u8) -> f64 {
        self.gamma[level as usize]
    }
}

/// Table for [`MAX_ROTATION_LEVEL`] and [`DEFAULT_SAFETY_FACTOR`], computed
/// once per process.
#[cfg(feature = "std")]
pub fn standard_bound_table() -> alloc::sync::Arc<RotationBoundTable> {
    use std::sync::{Arc, OnceLock};
    static TABLE: OnceLock<Arc<RotationBoundTable>> = OnceLock::new();
    TABLE
        .get_or_init(|| {
            Arc::new(
                RotationBoundTable::compute(MAX_ROTATION_LEVEL, DEFAULT_SAFETY_FACTOR)
                    .expect("default level is supported"),
            )
        })
        .clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
        loop {
            let q = Quaternion::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = q.norm();
            if n > 1e-3 && n <= 1.0 {
                return UnitQuaternion::new_normalize(q);
            }
        }
    }

    #[test]
    fn position_bound_values() {
        assert!((position_bound(0, 1.0) - 0.866_025_403_784_438_6).abs() < 1e-15);
        assert!((position_bound(2, 1.0) - 3f64.sqrt() / 8.0).abs() < 1e-15);
        assert!((position_bound(0, 0.35) - 0.303_108_891_324_553_1).abs() < 1e-12);
        assert_eq!(position_bound(3, 1.0), position_bound(2, 1.0) / 2.0);
    }

    #[test]
    fn gamma_bound_limits() {
        assert!((gamma_bound(0.0, 0.1) - 0.1).abs() < 1e-12);
        assert!((gamma_bound(0.1, 0.0) - 0.1).abs() < 1e-12);
        assert!((gamma_bound(PI, PI) - PI).abs() < 1e-12);
        assert!((gamma_bound(7.0, 9.0) - PI).abs() < 1e-12);
    }

    /// Dense maximization of the angle of Rx(a) Rz(b) built from matrices.
    fn gamma_oracle(theta: f64, phi: f64, step: f64) -> f64 {
        let mut best: f64 = 0.0;
        let na = (theta / step).ceil() as usize;
        let nb = (phi / step).ceil() as usize;
        for i in 0..=na {
            let a = (i as f64 * step).min(theta);
            for j in 0..=nb {
                let b = (j as f64 * step).min(phi);
                let r = nalgebra::Rotation3::from_axis_angle(&Vector3::x_axis(), a)
                    * nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), b);
                let c = ((r.matrix().trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
                best = best.max(c.acos());
            }
        }
        best
    }

    #[test]
    fn gamma_bound_matches_dense_maximization() {
        for (theta, phi) in [(0.3, 0.2), (0.05, 0.4), (1.0, 0.5)] {
            let g = gamma_bound(theta, phi);
            let oracle = gamma_oracle(theta, phi, 1e-4);
            assert!((g - oracle).abs() < 1e-6, "{theta} {phi}: {g} vs {oracle}");
        }
    }

    #[test]
    fn rotation_point_bound_values() {
        assert_eq!(rotation_point_bound(0.0, 3.0, 1.0), 0.0);
        assert!((rotation_point_bound(PI, 1.0, 0.0) - 2.0).abs() < 1e-15);
        let expected = 0.25 * (2.0 - 2.0 * 0.1f64.cos()).sqrt();
        assert!((rotation_point_bound(0.1, 0.2, 0.05) - expected).abs() < 1e-15);
        assert!((rotation_point_bound(0.1, 0.2, 0.05) - 0.024_989_584_7).abs() < 1e-9);
    }

    #[test]
    fn chord_bound_holds_for_random_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let c = random_rotation(&mut rng);
            let gamma = rng.random_range(0.0..PI);
            let axis = random_rotation(&mut rng) * Vector3::x_axis();
            let r = c * UnitQuaternion::from_axis_angle(&axis, rng.random_range(-gamma..=gamma));
            let p = Vector3::new(rng.random(), rng.random(), rng.random::<f64>()) - Vector3::repeat(0.5);
            let d = p.norm();
            assert!((r * p - c * p).norm() <= rotation_point_bound(gamma, d, 0.0) + 1e-12);
        }
    }

    #[test]
    fn subdivide_position() {
        let grid = PositionGrid {
            min_corner: Point3::new(-0.5, -0.5, -0.5),
            l0: 1.0,
        };
        let kids = PositionCell::ROOT.children().unwrap();
        for k in kids {
            let c = grid.center(&k);
            assert!(c.coords.iter().all(|v| (v.abs() - 0.25).abs() < 1e-15));
            assert_eq!(grid.side(k.level), 0.5);
        }
        assert_eq!(grid.bound(1), grid.bound(0) / 2.0);
        // random points of the parent fall in exactly one child
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let p = grid.sample(&PositionCell::ROOT, &mut rng);
            let hits = kids
                .iter()
                .filter(|k| {
                    let c = grid.center(k);
                    (p - c).iter().all(|d| d.abs() < 0.25)
                })
                .count();
            assert_eq!(hits, 1);
            let cell = grid.locate(&p, 1).unwrap();
            assert!(kids.contains(&cell));
            assert!((p - grid.center(&cell)).norm() <= grid.bound(1));
        }
    }

    #[test]
    fn pack_round_trips() {
        let p = PositionCell {
            level: 21,
            index: [(1 << 21) - 1, 12345, 0],
        };
        assert_eq!(PositionCell::unpack(21, p.pack()), p);
        let r = RotationCell::new(10, healpix::pixel_count(10) - 1, 6143).unwrap();
        assert_eq!(RotationCell::unpack(10, r.pack()), r);
    }

    #[test]
    fn level_zero_has_72_distinct_rotations() {
        let centers: Vec<_> = RotationCell::level_zero().map(|c| c.center()).collect();
        assert_eq!(centers.len(), 72);
        for i in 0..72 {
            assert!((centers[i].coords.norm() - 1.0).abs() < 1e-12);
            for j in 0..i {
                assert!(rotation_angle(&centers[i], &centers[j]) > 0.1);
            }
        }
        let children: usize = RotationCell::level_zero().map(|c| c.children().unwrap().len()).sum();
        assert_eq!(children, 576);
    }

    #[test]
    fn locate_inverts_center_and_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for level in 0..6u8 {
            for _ in 0..300 {
                let pixel = rng.random_range(0..healpix::pixel_count(level));
                let tilt = rng.random_range(0..tilt_bins(level)) as u32;
                let cell = RotationCell::new(level, pixel, tilt).unwrap();
                assert!(cell.contains(&cell.center()));
                assert!(cell.contains(&cell.sample(&mut rng)));
            }
        }
        // every rotation lies in a cell whose children contain it too
        for _ in 0..2000 {
            let r = random_rotation(&mut rng);
            for level in 0..5u8 {
                let parent = RotationCell::locate(&r, level).unwrap();
                let child = RotationCell::locate(&r, level + 1).unwrap();
                assert!(parent.children().unwrap().contains(&child));
            }
        }
    }

    #[test]
    fn children_cover_parent_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for cell in RotationCell::level_zero().step_by(5) {
            let kids = cell.children().unwrap();
            for _ in 0..200 {
                let r = cell.sample(&mut rng);
                assert_eq!(kids.iter().filter(|k| k.contains(&r)).count(), 1);
            }
        }
        assert!(RotationCell::new(MAX_ROTATION_LEVEL, 0, 0).unwrap().children().is_err());
    }

    #[test]
    fn bound_table_shape() {
        let t = RotationBoundTable::compute(6, DEFAULT_SAFETY_FACTOR).unwrap();
        assert!((t.phi[0] - PI / 6.0).abs() < 1e-15);
        assert!((t.phi[1] - PI / 12.0).abs() < 1e-15);
        // level 0 charts are centered on their own pixel: no twist
        assert!(t.twist[0] < 1e-12);
        for l in 1..t.gamma.len() {
            assert!(t.theta[l] < t.theta[l - 1]);
            assert!(t.phi[l] < t.phi[l - 1]);
            assert!(t.gamma[l] < t.gamma[l - 1]);
        }
        for l in 0..t.gamma.len() {
            assert!(t.gamma[l] >= t.theta[l].max(t.phi[l]));
        }
        assert!(RotationBoundTable::compute(11, 1.01).is_err());
    }

    #[test]
    fn symmetric_reduction_matches_exhaustive_table() {
        let fast = RotationBoundTable::compute(3, 1.0).unwrap();
        let full = RotationBoundTable::compute_exhaustive(3, 1.0).unwrap();
        for l in 0..4 {
            assert!((fast.theta[l] - full.theta[l]).abs() < 1e-12, "theta level {l}");
            assert!((fast.twist[l] - full.twist[l]).abs() < 1e-12, "twist level {l}");
        }
    }

    #[test]
    fn level_zero_radius_is_stable_under_denser_sampling() {
        let faces = [0u8, 4];
        let base = faces
            .iter()
            .map(|&f| pixel_extent(0, f, 0, 0, 2500).radius)
            .fold(0.0, f64::max);
        let dense = faces
            .iter()
            .map(|&f| pixel_extent(0, f, 0, 0, 5000).radius)
            .fold(0.0, f64::max);
        assert!(((dense - base) / base).abs() < 1e-3);
    }

    #[test]
    fn gamma_is_sound_for_sampled_rotations() {
        let table = RotationBoundTable::compute(4, DEFAULT_SAFETY_FACTOR).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..100_000 {
            let level = (i % 5) as u8;
            let cell = RotationCell::new(
                level,
                rng.random_range(0..healpix::pixel_count(level)),
                rng.random_range(0..tilt_bins(level)) as u32,
            )
            .unwrap();
            let r = cell.sample(&mut rng);
            assert!(rotation_angle(&r, &cell.center()) <= table.gamma(level));
        }
    }

    #[test]
    fn identity_cell_center_is_within_gamma() {
        let table = RotationBoundTable::compute(3, DEFAULT_SAFETY_FACTOR).unwrap();
        let id = UnitQuaternion::identity();
        let cell = RotationCell::locate(&id, 3).unwrap();
        assert!(cell.contains(&id));
        assert!(rotation_angle(&cell.center(), &id) <= table.gamma(3));
    }

    #[test]
    fn child_centers_lie_within_parent_gamma() {
        let table = RotationBoundTable::compute(1, DEFAULT_SAFETY_FACTOR).unwrap();
        for cell in RotationCell::level_zero() {
            let c = cell.center();
            for k in cell.children().unwrap() {
                assert!(rotation_angle(&c, &k.center()) <= table.gamma(0));
            }
        }
    }
}
