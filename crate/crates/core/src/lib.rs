//! Spatial, temporal, and geometric fusion of gridded remote-sensing data.
//!
//! The crate is organised by processing stage:
//!
//! * [`raster`] holds the grid, stack, and mask types every other module works on.
//! * [`stfilter`] is the multitemporal edge-preserving filter for spectral stacks.
//! * [`refine`] iteratively refines per-class probability maps with spatial,
//!   CIELAB, and nDSM-height weights.
//! * [`fusion`] prepares DSMs (co-registration, nDSM, class masks) and fuses
//!   temporal DSM stacks.
//! * [`stereo`] is a census + semi-global matching core with energy-map
//!   confidence masks and a masked Huber loss.
//! * [`metrics`] evaluates results (RMSE, F1, Otsu change detection, robust R²).
//! * [`synth`] generates seeded synthetic scenes with known ground truth.
//! * [`io`] reads and writes PFM/PGM rasters and JSON stack manifests.
//!
//! Per-pixel kernels run on rayon when the `parallel` feature is enabled
//! (the default) and fall back to plain iterators otherwise. Every pixel is
//! computed independently, so results do not depend on the thread count.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fusion;
pub mod io;
pub mod metrics;
pub mod par;
pub mod raster;
pub mod refine;
pub mod stereo;
pub mod stfilter;
pub mod synth;

pub use error::{Error, Result};
pub use raster::{
    BandwidthSet, ClassMaskSet, Grid, LabelGrid, Mask, MultiBandStack, RasterGrid, SurfaceClass, TemporalStack,
};
