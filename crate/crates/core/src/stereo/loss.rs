use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{is_nodata, Mask, RasterGrid};

/// Quadratic within `delta`, linear beyond.
#[inline]
pub fn huber(residual: f64, delta: f64) -> f64 {
    let a = residual.abs();
    if a <= delta {
        0.5 * residual * residual
    } else {
        delta * (a - 0.5 * delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Weight of the all-pixel term.
    pub w1: f64,
    /// Weight of the low-energy term.
    pub w2: f64,
    /// Weight of the edge term.
    pub w3: f64,
    pub huber_delta: f64,
    /// Energy below this counts as confident. Its scale follows the cost
    /// units and image content; recalibrate for other census windows.
    pub energy_threshold: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w1: 0.1,
            w2: 0.45,
            w3: 0.45,
            huber_delta: 1.0,
            energy_threshold: 2500.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMasks {
    pub energy: Mask,
    pub edge: Mask,
}

/// `energy < threshold` and the supplied edge map.
pub fn confidence_masks(energy: &RasterGrid, edges: &Mask, energy_threshold: f64) -> Result<ConfidenceMasks> {
    energy.ensure_dims(edges)?;
    Ok(ConfidenceMasks {
        energy: energy.map(|e| !is_nodata(*e) && *e < energy_threshold),
        edge: edges.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetLoss {
    pub total: f64,
    pub loss1: f64,
    pub loss2: f64,
    pub loss3: f64,
    /// Set when the energy mask selected no valid pixel (loss2 forced to 0).
    pub empty_energy_mask: bool,
    /// Set when the edge mask selected no valid pixel (loss3 forced to 0).
    pub empty_edge_mask: bool,
}

/// `w1·l1 + w2·l2 + w3·l3`.
pub fn combine_losses(loss1: f64, loss2: f64, loss3: f64, w: &LossWeights) -> f64 {
    w.w1 * loss1 + w.w2 * loss2 + w.w3 * loss3
}

/// Mean Huber loss between two disparity maps over all jointly valid
/// pixels, over the energy mask, and over the edge mask, plus their
/// weighted sum.
pub fn weighted_target_loss(
    pred: &RasterGrid,
    census_disp: &RasterGrid,
    masks: &ConfidenceMasks,
    w: &LossWeights,
) -> Result<TargetLoss> {
    pred.ensure_dims(census_disp)?;
    pred.ensure_dims(&masks.energy)?;
    pred.ensure_dims(&masks.edge)?;
    if !(w.w1 >= 0.0 && w.w2 >= 0.0 && w.w3 >= 0.0 && w.w1 + w.w2 + w.w3 > 0.0) {
        return Err(Error::param("w", "weights must be non-negative with a positive sum"));
    }
    let mut sums = [0.0; 3];
    let mut counts = [0usize; 3];
    for i in 0..pred.len() {
        let (p, c) = (pred.data()[i], census_disp.data()[i]);
        if is_nodata(p) || is_nodata(c) {
            continue;
        }
        let l = huber(p - c, w.huber_delta);
        let selected = [true, masks.energy.data()[i], masks.edge.data()[i]];
        for k in 0..3 {
            if selected[k] {
                sums[k] += l;
                counts[k] += 1;
            }
        }
    }
    if counts[0] == 0 {
        return Err(Error::NoValidPixels);
    }
    let mean = |k: usize| {
        if counts[k] == 0 {
            0.0
        } else {
            sums[k] / counts[k] as f64
        }
    };
    let (loss1, loss2, loss3) = (mean(0), mean(1), mean(2));
    if counts[1] == 0 {
        log::warn!("weighted_target_loss: energy mask is empty");
    }
    if counts[2] == 0 {
        log::warn!("weighted_target_loss: edge mask is empty");
    }
    Ok(TargetLoss {
        total: combine_losses(loss1, loss2, loss3, w),
        loss1,
        loss2,
        loss3,
        empty_energy_mask: counts[1] == 0,
        empty_edge_mask: counts[2] == 0,
    })
}

/// Linear disparity-to-height conversion for a synthetic rig.
pub fn disparity_to_height(disparity: &RasterGrid, scale: f64) -> Result<RasterGrid> {
    if !(scale > 0.0) {
        return Err(Error::param("scale", "must be > 0"));
    }
    Ok(disparity.map(|d| d * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Grid;

    #[test]
    fn huber_branches() {
        assert_eq!(huber(0.0, 1.0), 0.0);
        assert_eq!(huber(0.5, 1.0), 0.125);
        assert_eq!(huber(2.0, 1.0), 1.5);
        assert_eq!(huber(-2.0, 1.0), 1.5);
    }

    #[test]
    fn combined_arithmetic() {
        assert_eq!(combine_losses(1.0, 2.0, 3.0, &LossWeights::default()), 2.35);
    }

    #[test]
    fn masks_from_energy() {
        let full = confidence_masks(&RasterGrid::filled(3, 3, 0.0), &Grid::filled(3, 3, false), 2500.0).unwrap();
        assert!(full.energy.data().iter().all(|v| *v));
        let none = confidence_masks(&RasterGrid::filled(3, 3, 9999.0), &Grid::filled(3, 3, false), 2500.0).unwrap();
        assert!(none.energy.data().iter().all(|v| !v));
    }

    #[test]
    fn identical_maps_have_zero_loss() {
        let d = RasterGrid::from_fn(4, 4, |x, y| (x + y) as f64);
        let m = ConfidenceMasks {
            energy: Grid::filled(4, 4, true),
            edge: Grid::filled(4, 4, false),
        };
        let l = weighted_target_loss(&d, &d, &m, &LossWeights::default()).unwrap();
        assert_eq!((l.total, l.loss1, l.loss2, l.loss3), (0.0, 0.0, 0.0, 0.0));
        assert!(l.empty_edge_mask && !l.empty_energy_mask);
    }

    #[test]
    fn no_valid_pixels() {
        let d = RasterGrid::nodata(2, 2);
        let m = ConfidenceMasks {
            energy: Grid::filled(2, 2, true),
            edge: Grid::filled(2, 2, true),
        };
        assert!(matches!(
            weighted_target_loss(&d, &d, &m, &LossWeights::default()),
            Err(Error::NoValidPixels)
        ));
    }

    #[test]
    fn heights() {
        let d = RasterGrid::from_samples(2, 1, vec![0.0, 4.0]).unwrap();
        assert_eq!(disparity_to_height(&d, 0.5).unwrap().data(), &[0.0, 2.0]);
        assert!(disparity_to_height(&d, 0.0).is_err());
    }
}
