//! Two-stage coarse-to-fine convolutional hand segmentation.
//!
//! A multiscale network estimates hand probabilities at 1/16 of the input
//! resolution; a small refinement network then produces the full-resolution
//! mask from the upscaled coarse estimate together with the original image.

pub mod bench;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod network;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
