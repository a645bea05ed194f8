//! Locating the point where a probe's axis meets a tissue surface from stereo
//! images.
//!
//! The crate simulates a stereo laparoscope looking at a tissue phantom on a
//! rotation stage, extracts laser-spot ground truth by image subtraction,
//! derives the probe's 2D principal axis, trains a two-branch regressor
//! (image encoder + axis-points encoder) and evaluates it with pixel,
//! R2 and millimeter error statistics.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod axis;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod groundtruth;
pub mod model;
pub mod scene;
pub mod seed;

pub use error::{Error, Result};
