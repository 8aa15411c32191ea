use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::raster::{is_nodata, median_in_place, RasterGrid, NODATA};

/// Offset of a target DSM relative to a reference.
///
/// `apply_shift(target, est)` evaluates `target(x + dx, y + dy) - dz`,
/// which lines the target up with the reference. Equivalently the target
/// is the reference moved by `(dx, dy)` pixels and `dz` meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftEstimate {
    pub dx: i32,
    pub dy: i32,
    pub dz: f64,
    pub inlier_count: usize,
    /// Pixels compared at the chosen shift.
    pub compared: usize,
    /// RMSE of inlier height differences after removing `dz`.
    pub rmse_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoregParams {
    /// Height differences beyond this (after removing dz) are outliers, meters.
    pub outlier_threshold: f64,
    /// Integer shifts searched in each axis, pixels.
    pub search_radius: usize,
    /// Minimum number of jointly valid pixels for a candidate shift.
    pub min_overlap: usize,
}

impl Default for CoregParams {
    fn default() -> Self {
        Self {
            outlier_threshold: 6.0,
            search_radius: 8,
            min_overlap: 100,
        }
    }
}

/// `out(x, y) = grid(x - dx, y - dy) + dz`; pixels without a source are nodata.
pub fn shift_grid(grid: &RasterGrid, dx: i32, dy: i32, dz: f64) -> RasterGrid {
    let (w, h) = grid.dims();
    RasterGrid::from_fn(w, h, |x, y| {
        let sx = x as i64 - dx as i64;
        let sy = y as i64 - dy as i64;
        if sx < 0 || sy < 0 || sx >= w as i64 || sy >= h as i64 {
            NODATA
        } else {
            grid.get(sx as usize, sy as usize) + dz
        }
    })
}

/// Removes an estimated offset from `target`.
pub fn apply_shift(target: &RasterGrid, est: &ShiftEstimate) -> RasterGrid {
    shift_grid(target, -est.dx, -est.dy, -est.dz)
}

struct Candidate {
    dx: i32,
    dy: i32,
    dz: f64,
    cost: f64,
    inliers: usize,
    compared: usize,
    rmse: f64,
}

fn evaluate(target: &RasterGrid, reference: &RasterGrid, dx: i32, dy: i32, params: &CoregParams) -> Option<Candidate> {
    let (w, h) = reference.dims();
    let mut diffs = Vec::new();
    for y in 0..h {
        let ty = y as i64 + dy as i64;
        if ty < 0 || ty >= h as i64 {
            continue;
        }
        for x in 0..w {
            let tx = x as i64 + dx as i64;
            if tx < 0 || tx >= w as i64 {
                continue;
            }
            let r = reference.get(x, y);
            let t = target.get(tx as usize, ty as usize);
            if !is_nodata(r) && !is_nodata(t) {
                diffs.push(t - r);
            }
        }
    }
    let compared = diffs.len();
    if compared < params.min_overlap.max(1) {
        return None;
    }
    let thr = params.outlier_threshold;
    let mut sorted = diffs.clone();
    let centre = median_in_place(&mut sorted)?;
    let mean_within = |c: f64| {
        let (s, n) = diffs
            .iter()
            .filter(|d| (**d - c).abs() <= thr)
            .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
        if n == 0 {
            c
        } else {
            s / n as f64
        }
    };
    let dz = mean_within(mean_within(centre));
    let (mut sse, mut inliers, mut cost) = (0.0, 0usize, 0.0);
    for d in &diffs {
        let r2 = (d - dz) * (d - dz);
        if (d - dz).abs() <= thr {
            sse += r2;
            inliers += 1;
            cost += r2;
        } else {
            cost += thr * thr;
        }
    }
    Some(Candidate {
        dx,
        dy,
        dz,
        cost: cost / compared as f64,
        inliers,
        compared,
        rmse: if inliers > 0 {
            (sse / inliers as f64).sqrt()
        } else {
            0.0
        },
    })
}

/// Exhaustive integer search for the horizontal offset and vertical bias
/// of `target` relative to `reference`.
///
/// Each candidate shift is scored by the mean truncated squared height
/// difference: inliers (within `outlier_threshold` of the robust dz)
/// contribute their squared residual, outliers contribute the squared
/// threshold. Ties prefer the smaller shift.
pub fn coregister_dsm(target: &RasterGrid, reference: &RasterGrid, params: &CoregParams) -> Result<ShiftEstimate> {
    target.ensure_dims(reference)?;
    let r = params.search_radius as i32;
    let side = (2 * r + 1) as usize;
    let candidates = par::map_indices(side * side, |k| {
        let dx = (k % side) as i32 - r;
        let dy = (k / side) as i32 - r;
        evaluate(target, reference, dx, dy, params)
    });
    let best = candidates
        .into_iter()
        .flatten()
        .min_by(|a, b| {
            a.cost
                .total_cmp(&b.cost)
                .then((a.dx.abs() + a.dy.abs()).cmp(&(b.dx.abs() + b.dy.abs())))
        })
        .ok_or(Error::InsufficientOverlap)?;
    Ok(ShiftEstimate {
        dx: best.dx,
        dy: best.dy,
        dz: best.dz,
        inlier_count: best.inliers,
        compared: best.compared,
        rmse_after: best.rmse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize) -> RasterGrid {
        RasterGrid::from_fn(w, h, |x, y| {
            100.0 + if (x / 6 + y / 5) % 3 == 0 { 8.0 } else { 0.0 } + (x * y % 7) as f64 * 0.3
        })
    }

    #[test]
    fn identity() {
        let g = textured(32, 32);
        let e = coregister_dsm(&g, &g, &CoregParams::default()).unwrap();
        assert_eq!((e.dx, e.dy), (0, 0));
        assert_eq!(e.dz, 0.0);
        assert_eq!(e.rmse_after, 0.0);
        assert_eq!(e.inlier_count, 1024);
    }

    #[test]
    fn recovers_shift_and_applies_it() {
        let target = textured(40, 40);
        let reference = shift_grid(&target, 2, 3, 1.0);
        let e = coregister_dsm(&target, &reference, &CoregParams::default()).unwrap();
        assert_eq!((e.dx, e.dy), (-2, -3));
        assert!((e.dz + 1.0).abs() < 1e-12);
        let aligned = apply_shift(&target, &e);
        for i in 0..aligned.len() {
            let (a, r) = (aligned.data()[i], reference.data()[i]);
            if !a.is_nan() && !r.is_nan() {
                assert!((a - r).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn too_small_overlap() {
        let g = textured(5, 5);
        assert!(matches!(
            coregister_dsm(&g, &g, &CoregParams::default()),
            Err(Error::InsufficientOverlap)
        ));
    }
}
