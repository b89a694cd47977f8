//! Self-calibration and metric reconstruction of camera pairs with unknown,
//! different focal lengths, from a projective two-view reconstruction.
//!
//! The crate provides:
//!
//! - [`geometry`]: homogeneous-geometry primitives (cameras, rotations,
//!   dual quadrics, KRC decomposition).
//! - [`epipolar`]: fundamental-matrix estimation (Hartley-normalized 8-point),
//!   Sampson error, RANSAC, and the canonical projective pair.
//! - [`selfcalib`]: the linear DIAC system for a camera pair, its structured
//!   reduction, the quadratic solution for the plane at infinity, metric
//!   upgrade, cheirality disambiguation and geometric validity checks.
//! - [`verify`]: order-consistency verification of tentative matches via
//!   thresholded longest-increasing-subsequence filtering, applied recursively.
//! - [`averaging`]: Weiszfeld L1 rotation averaging (single and registration)
//!   and confidence-count based focal-length selection.
//! - [`synth`]: synthetic scene generation and the evaluation metrics
//!   (rotation, translation and focal errors) plus a benchmark driver.
//! - [`io`] / [`cli`]: text file formats and the command-line surface.

pub mod averaging;
pub mod cli;
pub mod epipolar;
pub mod geometry;
pub mod io;
pub mod selfcalib;
pub mod synth;
pub mod verify;

pub use epipolar::{CorrespondenceSet, FundamentalMatrix};
pub use geometry::{CameraMatrix, CameraFrame, CalibrationMatrix, DualQuadric, RotationMatrix};
pub use selfcalib::{CalibrateOptions, PairSolution};
