//! Saliency map generation, refinement and evaluation.
//!
//! * [`imagery`]: image/map containers, raster and tensor I/O, resizing.
//! * [`gradcam`]: gradient-weighted activation maps and multi-scale fusion.
//! * [`toyscorer`]: a small subitizing classifier with manual backprop.
//! * [`sum`]: the iterative mask-and-rescore updating loop and its losses.
//! * [`slic`]: SLIC superpixels, superpixel features and adjacency.
//! * [`refine`]: closed-form kernel regression over the superpixel graph.
//! * [`metrics`]: PR curve, max F-beta, MAE, S-measure, batch evaluation.
//! * [`synth`]: deterministic synthetic scenes.
//!
//! # Features
//!
//! - `parallel` *(default)*: fans per-channel, per-row and per-image loops out
//!   over rayon. Results are identical with the feature disabled.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod gradcam;
pub mod imagery;
pub mod metrics;
pub mod par;
pub mod refine;
pub mod slic;
pub mod sum;
pub mod synth;
pub mod toyscorer;

pub use error::{Error, Result};
