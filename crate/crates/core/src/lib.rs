//! Arch-prior tooth centroid detection and patch-based instance segmentation
//! on 3D point clouds.
//!
//! The crate is `no_std` and only needs `alloc`. It covers the whole
//! detect-and-segment pipeline:
//!
//! * [`geometry`], [`spatial`], [`sampling`]: point sets, a k-d tree, FPS and
//!   random subsampling, Chamfer/Huber/cross-entropy.
//! * [`synth`]: a seeded generator of labeled synthetic jaw scans and a vote
//!   simulator standing in for a learned voting head.
//! * [`arch`]: cubic Bézier arch fitting, target-arch construction and
//!   iterative polyline refinement against votes.
//! * [`assignment`]: a Kuhn–Munkres solver for rectangular cost matrices.
//! * [`detect`]: arch-aware sampling, grouping, proposals, NMS, detection
//!   metrics and losses.
//! * [`segment`]: patch cropping, per-patch masks, fusion and IoU/Dice.
//! * [`pipeline`]: one-model end-to-end runs used by the experiment harness.
#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` is used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod arch;
pub mod assignment;
pub mod detect;
pub mod error;
pub mod geometry;
mod linalg;
mod math;
pub mod pipeline;
pub mod sampling;
pub mod segment;
pub mod spatial;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{Point3, PointCloud, Transform};
pub use spatial::{KdTree, Neighbor};
