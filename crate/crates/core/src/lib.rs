//! Monocular 6-DoF visual localization with a nudged particle filter.
//!
//! A particle filter weights pose hypotheses by rendering the map from each
//! particle and comparing against the camera image with SSIM. Visual place
//! recognition over a database of pre-rendered anchor views injects
//! high-likelihood particles ("nudging"). The filter switches between a
//! coarse global mode and a high-resolution tracking mode based on particle
//! dispersion, and re-enters global mode when the anchors keep outscoring
//! the tracked particles.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod filter;
pub mod geometry;
pub mod harness;
pub mod image;
pub mod scene;
pub mod vpr;
