//! Census matching cost, semi-global aggregation, confidence masks, and
//! the masked Huber loss used to compare disparity maps.

mod canny;
mod census;
mod loss;
mod sgm;

pub use canny::{canny_edges, canny_edges_relative};
pub use census::{census_cost_volume, census_transform, hamming, CensusGrid, CostVolume};
pub use loss::{
    combine_losses, confidence_masks, disparity_to_height, huber, weighted_target_loss, ConfidenceMasks, LossWeights,
    TargetLoss,
};
pub use sgm::{sgm_aggregate, winner_take_all, Directions, SgmParams, SgmResult};
