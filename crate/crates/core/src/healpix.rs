//! The parts of HEALPix (nested scheme) the rotation grid needs.
//!
//! A pixel at `depth` is addressed by its nested index: the base face in the
//! top bits followed by the interleaved bits of its face coordinates `(ix, iy)`,
//! `ix` on the even bits. Continuous face coordinates `(x, y)` range over
//! `[0, 1]²`; pixel `(ix, iy)` covers `[ix, ix + 1] / nside × [iy, iy + 1] / nside`.
//! The projection is equal-area, so uniform face coordinates give uniform
//! points on the sphere.

use core::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use nalgebra::Vector3;
#[cfg(not(feature = "std"))]
use num_traits::Float;

pub const BASE_PIXELS: u64 = 12;

/// Deepest supported level; face coordinates fit in 20 bits.
pub const MAX_DEPTH: u8 = 20;

const JRLL: [f64; 12] = [2.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0, 3.0, 4.0, 4.0, 4.0, 4.0];
const JPLL: [f64; 12] = [1.0, 3.0, 5.0, 7.0, 0.0, 2.0, 4.0, 6.0, 1.0, 3.0, 5.0, 7.0];

pub fn nside(depth: u8) -> u64 {
    1 << depth
}

pub fn pixel_count(depth: u8) -> u64 {
    BASE_PIXELS << (2 * depth as u32)
}

/// Unit vector at continuous face coordinates.
pub fn xyf_to_vec(x: f64, y: f64, face: u8) -> Vector3<f64> {
    let (z, phi) = xyf_to_zphi(x, y, face);
    let sin_theta = ((1.0 - z) * (1.0 + z)).max(0.0).sqrt();
    let (s, c) = phi.sin_cos();
    Vector3::new(sin_theta * c, sin_theta * s, z)
}

fn xyf_to_zphi(x: f64, y: f64, face: u8) -> (f64, f64) {
    let f = face as usize;
    let jr = JRLL[f] - x - y;
    let (nr, z) = if jr < 1.0 {
        (jr, 1.0 - jr * jr / 3.0)
    } else if jr > 3.0 {
        let nr = 4.0 - jr;
        (nr, nr * nr / 3.0 - 1.0)
    } else {
        (1.0, (2.0 - jr) * 2.0 / 3.0)
    };
    let mut tmp = JPLL[f] * nr + x - y;
    if tmp < 0.0 {
        tmp += 8.0;
    }
    if tmp >= 8.0 {
        tmp -= 8.0;
    }
    let phi = if nr < 1e-15 { 0.0 } else { FRAC_PI_4 * tmp / nr };
    (z, phi)
}

/// Inverse of [`xyf_to_vec`]: base face and face coordinates of a direction.
pub fn vec_to_xyf(v: &Vector3<f64>) -> (f64, f64, u8) {
    let norm = v.norm();
    let z = (v.z / norm).clamp(-1.0, 1.0);
    let mut phi = v.y.atan2(v.x);
    if phi < 0.0 {
        phi += 2.0 * core::f64::consts::PI;
    }
    let tt = (phi / FRAC_PI_2).clamp(0.0, 4.0 - 1e-15);
    let za = z.abs();
    if za <= 2.0 / 3.0 {
        let jp = 0.5 + tt - 0.75 * z;
        let jm = 0.5 + tt + 0.75 * z;
        let ifp = jp.floor() as i64;
        let ifm = jm.floor() as i64;
        let face = if ifp == ifm {
            (ifp & 3) | 4
        } else if ifp < ifm {
            ifp & 3
        } else {
            (ifm & 3) + 8
        } as u8;
        let sum = JRLL[face as usize] - 2.0 + 1.5 * z;
        let mut diff = 2.0 * tt - JPLL[face as usize];
        if diff < -4.0 {
            diff += 8.0;
        } else if diff >= 4.0 {
            diff -= 8.0;
        }
        (0.5 * (sum + diff), 0.5 * (sum - diff), face)
    } else {
        let col = (tt.floor() as u8).min(3);
        let nr = (3.0 * (1.0 - za)).sqrt();
        let diff = nr * (2.0 * tt - JPLL[col as usize]);
        let (sum, face) = if z > 0.0 { (2.0 - nr, col) } else { (nr, col + 8) };
        (0.5 * (sum + diff), 0.5 * (sum - diff), face)
    }
}

fn spread_bits(v: u64) -> u64 {
    let mut x = v & 0xFFFF_FFFF;
    x = (x | (x << 16)) & 0x0000_FFFF_0000_FFFF;
    x = (x | (x << 8)) & 0x00FF_00FF_00FF_00FF;
    x = (x | (x << 4)) & 0x0F0F_0F0F_0F0F_0F0F;
    x = (x | (x << 2)) & 0x3333_3333_3333_3333;
    x = (x | (x << 1)) & 0x5555_5555_5555_5555;
    x
}

fn compact_bits(v: u64) -> u64 {
    let mut x = v & 0x5555_5555_5555_5555;
    x = (x | (x >> 1)) & 0x3333_3333_3333_3333;
    x = (x | (x >> 2)) & 0x0F0F_0F0F_0F0F_0F0F;
    x = (x | (x >> 4)) & 0x00FF_00FF_00FF_00FF;
    x = (x | (x >> 8)) & 0x0000_FFFF_0000_FFFF;
    x = (x | (x >> 16)) & 0x0000_0000_FFFF_FFFF;
    x
}

/// Face and face-grid coordinates of a nested pixel.
pub fn nested_to_xyf(depth: u8, index: u64) -> (u64, u64, u8) {
    let bits = 2 * depth as u32;
    let face = (index >> bits) as u8;
    let local = index & ((1u64 << bits) - 1);
    (compact_bits(local), compact_bits(local >> 1), face)
}

pub fn xyf_to_nested(depth: u8, ix: u64, iy: u64, face: u8) -> u64 {
    ((face as u64) << (2 * depth as u32)) | spread_bits(ix) | (spread_bits(iy) << 1)
}

/// Pixel center direction.
pub fn center(depth: u8, index: u64) -> Vector3<f64> {
    let (ix, iy, face) = nested_to_xyf(depth, index);
    let ns = nside(depth) as f64;
    xyf_to_vec((ix as f64 + 0.5) / ns, (iy as f64 + 0.5) / ns, face)
}

/// Nested index of the pixel containing `v`.
pub fn locate(depth: u8, v: &Vector3<f64>) -> u64 {
    let (x, y, face) = vec_to_xyf(v);
    let ns = nside(depth);
    let cell = |c: f64| ((c * ns as f64).floor().max(0.0) as u64).min(ns - 1);
    xyf_to_nested(depth, cell(x), cell(y), face)
}

/// The four nested children of a pixel, one level deeper.
pub fn children(index: u64) -> [u64; 4] {
    let b = index << 2;
    [b, b + 1, b + 2, b + 3]
}
