//! Gradient-orientation dissimilarity metrics for stereo matching and direct
//! image alignment.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod cli;
pub mod error;
pub mod eval;
pub mod image;
pub mod metrics;
pub mod stereo;
pub mod synth;

pub use error::{Error, Result};
