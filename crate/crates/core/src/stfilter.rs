//! Multitemporal edge-preserving filter for spectral stacks.
//!
//! For each band independently, a pixel at date `t` is replaced by a
//! weighted mean over its spatial window and every acquisition date:
//!
//! ```text
//! w(j, s) = exp(-|j - i|² / 2σx²)
//!         · exp(-(I(j, t) - I(i, t))² / 2σs²)
//!         · exp(-(I(i, s) - I(i, t))² / 2σTs²)
//! out(i, t) = Σ w(j, s) I(j, s) / Σ w(j, s)
//! ```
//!
//! The first two factors form an ordinary bilateral kernel at date `t`;
//! the third admits other dates only where the centre pixel's own history
//! is spectrally similar, so genuine temporal changes survive. Temporal
//! distance itself carries no weight. Bands are never mixed. With
//! `σTs = 0` only `s = t` contributes and the filter is exactly
//! [`bilateral_filter`] per date.
//!
//! Windows are clipped at the image border and weights renormalise over
//! the clipped set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::raster::{
    clipped_range, floor_sigma, is_nodata, population_std, validate_window, MultiBandStack, RasterGrid, TemporalStack,
    NODATA,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StFilterParams {
    /// Spatial bandwidth, pixels.
    pub sigma_x: f64,
    /// Spectral bandwidth at the centre date, normalized units.
    pub sigma_s: f64,
    /// Spectral bandwidth along the centre pixel's time series. Zero
    /// selects the pure bilateral path.
    pub sigma_ts: f64,
    /// Odd window size, pixels.
    pub window: usize,
}

impl Default for StFilterParams {
    fn default() -> Self {
        Self {
            sigma_x: 3.0,
            sigma_s: 50.0 / 255.0,
            sigma_ts: 0.2,
            window: 5,
        }
    }
}

impl StFilterParams {
    pub fn validate(&self) -> Result<()> {
        validate_window(self.window)?;
        if !(self.sigma_ts >= 0.0) {
            return Err(Error::param("sigma_ts", "must be >= 0"));
        }
        if !(self.sigma_x > 0.0) {
            return Err(Error::param("sigma_x", "must be > 0"));
        }
        if !(self.sigma_s > 0.0) {
            return Err(Error::param("sigma_s", "must be > 0"));
        }
        Ok(())
    }
}

#[inline]
fn inv_two_sigma_sq(sigma: f64) -> f64 {
    let s = floor_sigma(sigma);
    1.0 / (2.0 * s * s)
}

fn bilateral_pixel(grid: &RasterGrid, x: usize, y: usize, half: usize, kx: f64, ks: f64) -> f64 {
    let center = grid.get(x, y);
    if is_nodata(center) {
        return NODATA;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for jy in clipped_range(y, half, grid.height()) {
        let dy = jy as f64 - y as f64;
        for jx in clipped_range(x, half, grid.width()) {
            let v = grid.get(jx, jy);
            if is_nodata(v) {
                continue;
            }
            let dx = jx as f64 - x as f64;
            let dv = v - center;
            let w = (-(dx * dx + dy * dy) * kx - dv * dv * ks).exp();
            num += w * v;
            den += w;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        NODATA
    }
}

/// Edge-preserving bilateral filter over a clipped square window.
pub fn bilateral_filter(grid: &RasterGrid, sigma_x: f64, sigma_s: f64, window: usize) -> Result<RasterGrid> {
    validate_window(window)?;
    let half = window / 2;
    let kx = inv_two_sigma_sq(sigma_x);
    let ks = inv_two_sigma_sq(sigma_s);
    let w = grid.width();
    let data = par::map_indices(grid.len(), |i| bilateral_pixel(grid, i % w, i / w, half, kx, ks));
    RasterGrid::from_vec(grid.width(), grid.height(), data)
}

struct Kernel {
    half: usize,
    kx: f64,
    ks: f64,
    kt: f64,
}

impl Kernel {
    fn new(p: &StFilterParams) -> Self {
        Self {
            half: p.window / 2,
            kx: inv_two_sigma_sq(p.sigma_x),
            ks: inv_two_sigma_sq(p.sigma_s),
            kt: inv_two_sigma_sq(p.sigma_ts),
        }
    }

    /// Temporal factor per date for the pixel at `idx`, centred on date `t`.
    fn temporal_weights(&self, stack: &TemporalStack, idx: usize, t: usize) -> Vec<f64> {
        let center = stack.grid(t).data()[idx];
        stack
            .grids()
            .iter()
            .map(|g| {
                let v = g.data()[idx];
                if is_nodata(v) {
                    0.0
                } else {
                    let dv = v - center;
                    (-dv * dv * self.kt).exp()
                }
            })
            .collect()
    }

    /// Calls `visit(jx, jy, s, weight)` for every positive-weight contribution.
    fn for_each(
        &self,
        stack: &TemporalStack,
        x: usize,
        y: usize,
        t: usize,
        mut visit: impl FnMut(usize, usize, usize, f64, f64),
    ) {
        let (w, h) = stack.dims();
        let at_t = stack.grid(t);
        let idx = y * w + x;
        let center = at_t.data()[idx];
        if is_nodata(center) {
            return;
        }
        let temporal = self.temporal_weights(stack, idx, t);
        for jy in clipped_range(y, self.half, h) {
            let dy = jy as f64 - y as f64;
            for jx in clipped_range(x, self.half, w) {
                let jidx = jy * w + jx;
                let ref_v = at_t.data()[jidx];
                if is_nodata(ref_v) {
                    continue;
                }
                let dx = jx as f64 - x as f64;
                let dv = ref_v - center;
                let spatial = (-(dx * dx + dy * dy) * self.kx - dv * dv * self.ks).exp();
                for (s, (g, &tw)) in stack.grids().iter().zip(&temporal).enumerate() {
                    let v = g.data()[jidx];
                    if tw == 0.0 || is_nodata(v) {
                        continue;
                    }
                    visit(jx, jy, s, spatial * tw, v);
                }
            }
        }
    }

    fn pixel(&self, stack: &TemporalStack, x: usize, y: usize, t: usize) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        self.for_each(stack, x, y, t, |_, _, _, w, v| {
            num += w * v;
            den += w;
        });
        if den > 0.0 {
            num / den
        } else {
            NODATA
        }
    }
}

/// Filters one band's temporal stack.
pub fn stfilter_band(stack: &TemporalStack, params: &StFilterParams) -> Result<TemporalStack> {
    params.validate()?;
    if params.sigma_ts == 0.0 {
        let grids = stack
            .grids()
            .iter()
            .map(|g| bilateral_filter(g, params.sigma_x, params.sigma_s, params.window))
            .collect::<Result<Vec<_>>>()?;
        return stack.with_grids(grids);
    }
    let kernel = Kernel::new(params);
    let (w, h) = stack.dims();
    let n = w * h;
    let grids = (0..stack.len())
        .map(|t| {
            let data = par::map_indices(n, |i| kernel.pixel(stack, i % w, i / w, t));
            RasterGrid::from_vec(w, h, data)
        })
        .collect::<Result<Vec<_>>>()?;
    stack.with_grids(grids)
}

/// Filters every band of a multispectral stack. Inputs are expected to be
/// normalized to `[0, 1]` per band so that `sigma_ts` is on a reflectance scale.
pub fn stfilter(stack: &MultiBandStack, params: &StFilterParams) -> Result<MultiBandStack> {
    params.validate()?;
    let bands = stack
        .bands()
        .map(|(_, s)| stfilter_band(s, params))
        .collect::<Result<Vec<_>>>()?;
    MultiBandStack::new(bands)
}

/// One term of the weighted sum producing an output pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub x: usize,
    pub y: usize,
    pub date: usize,
    /// Normalized weight; all contributions of a pixel sum to one.
    pub weight: f64,
    pub value: f64,
}

/// The normalized contributions behind output pixel `(x, y)` at date `t`.
pub fn contributions(
    stack: &TemporalStack,
    params: &StFilterParams,
    x: usize,
    y: usize,
    t: usize,
) -> Result<Vec<Contribution>> {
    params.validate()?;
    let mut out = Vec::new();
    if params.sigma_ts == 0.0 {
        let single = stack.with_grids(vec![stack.grid(t).clone()])?;
        Kernel::new(params).for_each(&single, x, y, 0, |x, y, _, weight, value| {
            out.push(Contribution {
                x,
                y,
                date: t,
                weight,
                value,
            })
        });
    } else {
        Kernel::new(params).for_each(stack, x, y, t, |x, y, date, weight, value| {
            out.push(Contribution {
                x,
                y,
                date,
                weight,
                value,
            })
        });
    }
    let total: f64 = out.iter().map(|c| c.weight).sum();
    if total > 0.0 {
        for c in &mut out {
            c.weight /= total;
        }
    }
    Ok(out)
}

/// Per-pixel population standard deviation across dates.
pub fn temporal_variance_profile(stack: &TemporalStack) -> Result<RasterGrid> {
    if stack.len() < 2 {
        return Err(Error::SingleDate);
    }
    let (w, h) = stack.dims();
    let data = par::map_indices(w * h, |i| population_std(&stack.pixel_samples(i)).unwrap_or(NODATA));
    RasterGrid::from_vec(w, h, data)
}

/// Mean of the valid samples of [`temporal_variance_profile`].
pub fn mean_temporal_std(stack: &TemporalStack) -> Result<f64> {
    let p = temporal_variance_profile(stack)?;
    let valid: Vec<f64> = p.data().iter().copied().filter(|v| !is_nodata(*v)).collect();
    if valid.is_empty() {
        return Err(Error::AllNodata);
    }
    Ok(valid.iter().sum::<f64>() / valid.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack(grids: Vec<RasterGrid>) -> TemporalStack {
        TemporalStack::with_daily_dates(grids, "red").unwrap()
    }

    #[test]
    fn constant_grid_is_preserved() {
        let g = RasterGrid::filled(6, 5, 7.0);
        let out = bilateral_filter(&g, 3.0, 0.19, 5).unwrap();
        assert!(out.data().iter().all(|v| (*v - 7.0).abs() < 1e-12));
        let s = stack(vec![g.clone(), g.clone(), g]);
        let out = stfilter_band(&s, &StFilterParams::default()).unwrap();
        for g in out.grids() {
            assert!(g.data().iter().all(|v| (*v - 7.0).abs() < 1e-12));
        }
    }

    #[test]
    fn single_pixel_unchanged() {
        let g = RasterGrid::filled(1, 1, 0.3);
        assert_eq!(bilateral_filter(&g, 3.0, 0.19, 5).unwrap().data(), &[0.3]);
    }

    #[test]
    fn all_nodata_window_gives_nodata() {
        let g = RasterGrid::nodata(3, 3);
        let out = bilateral_filter(&g, 1.0, 0.1, 3).unwrap();
        assert_eq!(out.nodata_count(), 9);
    }

    #[test]
    fn nodata_neighbours_get_zero_weight() {
        let mut g = RasterGrid::filled(3, 3, 0.5);
        g.set(0, 0, NODATA);
        let out = bilateral_filter(&g, 1.0, 0.1, 3).unwrap();
        assert!(out.get(0, 0).is_nan());
        assert_eq!(out.get(1, 1), 0.5);
    }

    #[test]
    fn even_window_rejected() {
        let g = RasterGrid::filled(3, 3, 0.5);
        assert!(bilateral_filter(&g, 1.0, 0.1, 4).is_err());
    }

    #[test]
    fn temporal_std_two_points() {
        let s = stack(vec![RasterGrid::filled(2, 2, 1.0), RasterGrid::filled(2, 2, 3.0)]);
        let p = temporal_variance_profile(&s).unwrap();
        assert!(p.data().iter().all(|v| *v == 1.0));
        let same = stack(vec![RasterGrid::filled(2, 2, 1.0), RasterGrid::filled(2, 2, 1.0)]);
        assert!(temporal_variance_profile(&same)
            .unwrap()
            .data()
            .iter()
            .all(|v| *v == 0.0));
        let one = stack(vec![RasterGrid::filled(2, 2, 1.0)]);
        assert!(matches!(temporal_variance_profile(&one), Err(Error::SingleDate)));
    }

    #[test]
    fn sharp_temporal_change_survives() {
        // Date 2 differs from the others by 10 σTs across the whole scene.
        let p = StFilterParams {
            sigma_ts: 0.05,
            ..Default::default()
        };
        let base = RasterGrid::filled(7, 7, 0.2);
        let changed = RasterGrid::filled(7, 7, 0.7);
        let s = stack(vec![base.clone(), base.clone(), changed, base]);
        let out = stfilter_band(&s, &p).unwrap();
        let gap = 0.5;
        for (t, g) in out.grids().iter().enumerate() {
            let want = if t == 2 { 0.7 } else { 0.2 };
            for v in g.data() {
                assert!((v - want).abs() < 0.01 * gap, "date {t}: {v}");
            }
        }
    }
}
