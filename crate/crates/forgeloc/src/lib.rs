//! Dual-branch forgery localization for arbitrary-resolution images.
//!
//! One branch scores non-overlapping tiles with a pixel-level scorer (the
//! built-in fixed filter bank, or an external segmenter attached through a
//! file protocol) and stitches the tile maps to full resolution. The other
//! slides a window classifier over the frame and blends the per-window
//! logits into a dense heatmap with a Hann taper. The branches are fused by
//! pixel-wise maximum and thresholded into a binary mask; evaluation sweeps
//! the threshold grid and reports mean IoU.
//!
//! Start from [`pipeline::localize`] for the whole pipeline, or use the
//! modules directly:
//!
//! - [`raster`]: planes, images, masks, probability maps, padding
//! - [`io`]: PNG and raw-dump file formats
//! - [`tiler`]: tile partitions, sliding-window plans, stitching
//! - [`features`]: the fixed filter bank and edge-prior augmentation
//! - [`edge_target`]: soft multi-scale edge supervision targets
//! - [`heatmap`]: Hann-blended logit accumulation
//! - [`scorer`]: pluggable scoring backends and the external protocol
//! - [`eval`]: fusion, thresholding, IoU, threshold sweeps
//!
//! The `examples/` directory holds one runnable example per capability.

pub mod edge_target;
mod error;
pub mod eval;
pub mod features;
pub mod heatmap;
pub mod io;
pub mod mem;
pub mod pipeline;
pub mod raster;
pub mod scorer;
pub mod tiler;

pub use error::{Error, Result};
pub use pipeline::{localize, run_eval, DatasetManifest, LocalizeOutput, PipelineConfig};
pub use raster::{BinaryMask, GrayImage, ImageRgb, LogitMap, Plane, ProbMap};
