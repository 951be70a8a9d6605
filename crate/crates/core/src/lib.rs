//! Learned binary single-pixel-camera patterns for object-selective imaging.

// `!(x > 0.0)` style checks are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod camsim;
pub mod cli;
pub mod error;
pub mod image;
pub mod kernel;
pub mod recon;
pub mod sampler;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
pub use image::ImageGrid;
