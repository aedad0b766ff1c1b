//! cueforge: decompose semantic-segmentation datasets into cue-specific
//! datasets (color, texture, shape) and evaluate predictions with pixel-,
//! class- and segment-level metrics.
//!
//! The pieces:
//!
//! * [`raster`] / [`manifest`]: planar rasters, label masks, class
//!   tables, cue sets, JSON manifests with provenance.
//! * [`color`]: HSV decomposition, gray/chroma projections, per-pixel
//!   datasets for color experts.
//! * [`texture`]: the three-stage texture dataset generator (patch
//!   extraction, mosaic stitching, Voronoi surrogate tasks).
//! * [`eed`]: edge-enhancing diffusion solver producing shape-plus-color
//!   images with texture smoothed away.
//! * [`metrics`]: confusion-matrix IoU, boundary/interior accuracy,
//!   segment recall and coverage histograms.
//! * [`experts`]: per-pixel color experts, the no-info baseline, and
//!   pixel-wise late fusion of two experts' softmax fields.
//! * [`cli`]: the `cueforge` command-line front end.
//!
//! Everything stochastic draws from explicitly seeded streams; identical
//! inputs and seeds give byte-identical outputs regardless of worker count.

pub mod ccl;
pub mod cli;
pub mod color;
pub mod eed;
pub mod error;
pub mod experts;
pub mod io;
pub mod manifest;
pub mod metrics;
pub mod raster;
pub mod rng;
pub mod texture;

pub use error::{CueError, Result};
