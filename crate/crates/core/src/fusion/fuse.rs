use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::raster::{
    clipped_range, floor_sigma, is_nodata, median_in_place, validate_window, ClassMaskSet, RasterGrid, SurfaceClass,
    TemporalStack, NODATA,
};

/// A fused DSM plus the number of pixels that fell back to a simpler rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Fused {
    pub dsm: RasterGrid,
    pub fallback_pixels: usize,
}

fn grid_from(w: usize, h: usize, data: Vec<f64>) -> RasterGrid {
    RasterGrid::from_vec(w, h, data).expect("dims")
}

/// Per-pixel median of the valid samples across dates.
pub fn median_fuse(stack: &TemporalStack) -> RasterGrid {
    let (w, h) = stack.dims();
    let data = par::map_indices(w * h, |i| {
        median_in_place(&mut stack.pixel_samples(i)).unwrap_or(NODATA)
    });
    grid_from(w, h, data)
}

/// Median over same-class samples inside a disk of `radius` pixels and all
/// dates. Pixels not covered by any mask use the per-pixel temporal median.
pub fn adaptive_median_fuse(stack: &TemporalStack, masks: &ClassMaskSet, radius: usize) -> Result<Fused> {
    if stack.dims() != masks.dims() {
        return Err(Error::DimensionMismatch {
            expected: stack.dims(),
            found: masks.dims(),
        });
    }
    let (w, h) = stack.dims();
    let slots = masks.slot_grid();
    let r2 = (radius * radius) as i64;
    let out = par::map_indices(w * h, |i| {
        let (x, y) = (i % w, i / w);
        let Some(slot) = slots.data()[i] else {
            return (median_in_place(&mut stack.pixel_samples(i)).unwrap_or(NODATA), true);
        };
        let mut samples = Vec::new();
        for ky in clipped_range(y, radius, h) {
            for kx in clipped_range(x, radius, w) {
                let dx = kx as i64 - x as i64;
                let dy = ky as i64 - y as i64;
                let k = ky * w + kx;
                if dx * dx + dy * dy > r2 || slots.data()[k] != Some(slot) {
                    continue;
                }
                samples.extend(stack.grids().iter().map(|g| g.data()[k]).filter(|v| !is_nodata(*v)));
            }
        }
        (median_in_place(&mut samples).unwrap_or(NODATA), false)
    });
    let fallback_pixels = out.iter().filter(|(_, f)| *f).count();
    if fallback_pixels > 0 {
        log::warn!("adaptive_median_fuse: {fallback_pixels} pixels outside every mask");
    }
    Ok(Fused {
        dsm: grid_from(w, h, out.into_iter().map(|(v, _)| v).collect()),
        fallback_pixels,
    })
}

/// Picks the representative elevation from a set of samples.
///
/// Sorted samples are split wherever consecutive values differ by at
/// least `link_threshold` (single linkage). Each cluster is scored by the
/// mean, over all samples, of the distance to the cluster median truncated
/// at `link_threshold`. The lowest cost wins; ties prefer the larger
/// cluster and then the lower median. Returns that cluster's median.
pub fn kmedian_pick(samples: &mut [f64], link_threshold: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    samples.sort_by(f64::total_cmp);
    let mut clusters = Vec::new();
    let mut start = 0;
    for i in 1..=samples.len() {
        if i == samples.len() || samples[i] - samples[i - 1] >= link_threshold {
            clusters.push(start..i);
            start = i;
        }
    }
    let n = samples.len() as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    for c in clusters {
        let members = &samples[c.clone()];
        let m = members.len();
        let median = if m % 2 == 1 {
            members[m / 2]
        } else {
            0.5 * (members[m / 2 - 1] + members[m / 2])
        };
        let cost = samples
            .iter()
            .map(|v| (v - median).abs().min(link_threshold))
            .sum::<f64>()
            / n;
        let better = match best {
            None => true,
            Some((bc, bn, bm)) => cost < bc || (cost == bc && (m > bn || (m == bn && median < bm))),
        };
        if better {
            best = Some((cost, m, median));
        }
    }
    best.map(|(_, _, m)| m)
}

/// Clustering fusion over a `window × window × dates` neighbourhood.
pub fn kmedian_cluster_fuse(stack: &TemporalStack, window: usize, link_threshold: f64) -> Result<RasterGrid> {
    validate_window(window)?;
    if !(link_threshold > 0.0) {
        return Err(Error::param("link_threshold", "must be > 0"));
    }
    let (w, h) = stack.dims();
    let half = window / 2;
    let data = par::map_indices(w * h, |i| {
        let (x, y) = (i % w, i / w);
        let mut samples = Vec::with_capacity(window * window * stack.len());
        for ky in clipped_range(y, half, h) {
            for kx in clipped_range(x, half, w) {
                let k = ky * w + kx;
                samples.extend(stack.grids().iter().map(|g| g.data()[k]).filter(|v| !is_nodata(*v)));
            }
        }
        kmedian_pick(&mut samples, link_threshold).unwrap_or(NODATA)
    });
    Ok(grid_from(w, h, data))
}

/// Residual-weighted average: `w_i = exp(-(DSM_i - ref)² / 2σw²)`.
///
/// `reference` defaults to the median fusion. Pixels whose weights all
/// underflow 1e-12 take the reference value and are counted as fallbacks.
pub fn weighted_average_fuse(stack: &TemporalStack, reference: Option<&RasterGrid>, sigma_w: f64) -> Result<Fused> {
    let median;
    let reference = match reference {
        Some(r) => {
            if r.dims() != stack.dims() {
                return Err(Error::DimensionMismatch {
                    expected: stack.dims(),
                    found: r.dims(),
                });
            }
            r
        }
        None => {
            median = median_fuse(stack);
            &median
        }
    };
    let (w, h) = stack.dims();
    let s = floor_sigma(sigma_w);
    let k = 1.0 / (2.0 * s * s);
    let out = par::map_indices(w * h, |i| {
        let r = reference.data()[i];
        if is_nodata(r) {
            return (NODATA, false);
        }
        let (mut num, mut den) = (0.0, 0.0);
        for g in stack.grids() {
            let v = g.data()[i];
            if is_nodata(v) {
                continue;
            }
            let wt = (-(v - r) * (v - r) * k).exp();
            num += wt * v;
            den += wt;
        }
        if den < 1e-12 {
            (r, true)
        } else {
            (num / den, false)
        }
    });
    let fallback_pixels = out.iter().filter(|(_, f)| *f).count();
    Ok(Fused {
        dsm: grid_from(w, h, out.into_iter().map(|(v, _)| v).collect()),
        fallback_pixels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionBandwidths {
    /// Orthophoto intensity bandwidth.
    pub sigma_r: f64,
    /// Spatial bandwidth, pixels.
    pub sigma_s: f64,
    /// Height bandwidth per class, meters.
    pub sigma_h: BTreeMap<SurfaceClass, f64>,
    pub window: usize,
}

impl Default for FusionBandwidths {
    fn default() -> Self {
        let sigma_h = [
            (SurfaceClass::Building, 3.0),
            (SurfaceClass::GroundRoad, 3.0),
            (SurfaceClass::Tree, 7.0),
            (SurfaceClass::Grass, 7.0),
            (SurfaceClass::Water, 7.0),
        ]
        .into_iter()
        .collect();
        Self {
            sigma_r: 30.0,
            sigma_s: 5.0,
            sigma_h,
            window: 5,
        }
    }
}

fn st_fuse_core(
    stack: &TemporalStack,
    ortho: &RasterGrid,
    sigma_r: f64,
    sigma_s: f64,
    window: usize,
    sigma_h_at: &(dyn Fn(usize) -> Option<f64> + Sync),
) -> Result<Fused> {
    validate_window(window)?;
    if ortho.dims() != stack.dims() {
        return Err(Error::DimensionMismatch {
            expected: stack.dims(),
            found: ortho.dims(),
        });
    }
    let med = median_fuse(stack);
    let (w, h) = stack.dims();
    let half = window / 2;
    let kr = {
        let s = floor_sigma(sigma_r);
        1.0 / (2.0 * s * s)
    };
    let ks = {
        let s = floor_sigma(sigma_s);
        1.0 / (2.0 * s * s)
    };
    let out = par::map_indices(w * h, |i| {
        let (x, y) = (i % w, i / w);
        let hm = med.data()[i];
        let Some(sigma_h) = sigma_h_at(i) else {
            return (hm, true);
        };
        let sh = floor_sigma(sigma_h);
        let kh = 1.0 / (2.0 * sh * sh);
        let ic = ortho.data()[i];
        let (mut num, mut den) = (0.0, 0.0);
        for ky in clipped_range(y, half, h) {
            let dy = ky as f64 - y as f64;
            for kx in clipped_range(x, half, w) {
                let k = ky * w + kx;
                let dx = kx as f64 - x as f64;
                let di = ic - ortho.data()[k];
                let e_rs = di * di * kr + (dx * dx + dy * dy) * ks;
                for g in stack.grids() {
                    let v = g.data()[k];
                    let dh = hm - v;
                    let wt = (-(e_rs + dh * dh * kh)).exp();
                    if wt > 0.0 {
                        num += wt * v;
                        den += wt;
                    }
                }
            }
        }
        if den > 0.0 {
            (num / den, false)
        } else {
            (hm, !is_nodata(hm))
        }
    });
    let fallback_pixels = out.iter().filter(|(_, f)| *f).count();
    if fallback_pixels > 0 {
        log::warn!("adaptive_st_fuse: {fallback_pixels} pixels fell back to the temporal median");
    }
    Ok(Fused {
        dsm: grid_from(w, h, out.into_iter().map(|(v, _)| v).collect()),
        fallback_pixels,
    })
}

/// Class-adaptive spatiotemporal fusion.
///
/// Each output pixel is a weighted mean of every sample in its window and
/// all dates. Weights multiply an orthophoto intensity term, a spatial
/// term, and a height term that compares the sample to the pixel's
/// temporal median. The height bandwidth is chosen by the class mask at
/// the output pixel. NaN weights (nodata) count as zero. Pixels with zero
/// total weight or outside every mask return the temporal median.
pub fn adaptive_st_fuse(
    stack: &TemporalStack,
    ortho: &RasterGrid,
    masks: &ClassMaskSet,
    bw: &FusionBandwidths,
) -> Result<Fused> {
    if masks.dims() != stack.dims() {
        return Err(Error::DimensionMismatch {
            expected: stack.dims(),
            found: masks.dims(),
        });
    }
    let per_slot: Vec<f64> = masks
        .classes()
        .map(|c| {
            bw.sigma_h
                .get(c)
                .copied()
                .ok_or_else(|| Error::param("sigma_h", format!("no bandwidth for class `{c}`")))
        })
        .collect::<Result<_>>()?;
    let slots = masks.slot_grid();
    st_fuse_core(stack, ortho, bw.sigma_r, bw.sigma_s, bw.window, &|i| {
        slots.data()[i].map(|s| per_slot[s])
    })
}

/// [`adaptive_st_fuse`] with one height bandwidth for every pixel.
pub fn adaptive_st_fuse_uniform(
    stack: &TemporalStack,
    ortho: &RasterGrid,
    sigma_r: f64,
    sigma_s: f64,
    sigma_h: f64,
    window: usize,
) -> Result<Fused> {
    st_fuse_core(stack, ortho, sigma_r, sigma_s, window, &|_| Some(sigma_h))
}
