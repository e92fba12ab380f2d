#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod healpix;
pub mod init_bound;
pub mod mesh;
pub mod miniball;
pub mod pose_distribution;
pub mod pose_search;
pub mod se3_grid;
pub mod sim;
pub mod tip_calibration;
