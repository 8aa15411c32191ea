//! DSM preparation and temporal DSM fusion.

mod coreg;
mod fuse;
mod ndsm;

pub use coreg::{apply_shift, coregister_dsm, shift_grid, CoregParams, ShiftEstimate};
pub use fuse::{
    adaptive_median_fuse, adaptive_st_fuse, adaptive_st_fuse_uniform, kmedian_cluster_fuse, kmedian_pick, median_fuse,
    weighted_average_fuse, Fused, FusionBandwidths,
};
pub use ndsm::{
    class_uncertainty, derive_class_masks, grey_erosion, ndsm_tophat, ndvi, reconstruct_by_dilation, ClassUncertainty,
    MaskThresholds, TopHatParams,
};
