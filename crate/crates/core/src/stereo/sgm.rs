use serde::{Deserialize, Serialize};

use super::census::CostVolume;
use crate::error::{Error, Result};
use crate::par;
use crate::raster::RasterGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Directions {
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "8")]
    Eight,
}

impl Directions {
    /// Travel directions `r`; each path visits `p` after `p - r`.
    pub fn vectors(self) -> &'static [(i64, i64)] {
        const EIGHT: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)];
        match self {
            Directions::Four => &EIGHT[..4],
            Directions::Eight => &EIGHT[..],
        }
    }

    pub fn count(self) -> usize {
        self.vectors().len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgmParams {
    /// Penalty for a one-level disparity change.
    pub p1: f64,
    /// Penalty for larger jumps.
    pub p2: f64,
    pub directions: Directions,
}

impl Default for SgmParams {
    fn default() -> Self {
        Self {
            p1: 10.0,
            p2: 120.0,
            directions: Directions::Eight,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgmResult {
    /// Summed path costs `S`.
    pub aggregated: CostVolume,
    /// `argmin_d S`, lowest `d` on ties.
    pub disparity: RasterGrid,
    /// `min_d S`.
    pub energy: RasterGrid,
}

/// Path costs along one direction:
///
/// `L(p, d) = C(p, d) + min(L(q, d), L(q, d±1) + P1, min_k L(q, k) + P2) - min_k L(q, k)`
///
/// with `q = p - r`, and `L = C` where `q` is outside the image.
fn path_costs(cost: &CostVolume, r: (i64, i64), p1: f64, p2: f64) -> Vec<f64> {
    let (w, h, dm) = (cost.width(), cost.height(), cost.dmax());
    let mut l = vec![0.0; w * h * dm];
    let ys: Vec<usize> = if r.1 < 0 {
        (0..h).rev().collect()
    } else {
        (0..h).collect()
    };
    let xs: Vec<usize> = if r.0 < 0 {
        (0..w).rev().collect()
    } else {
        (0..w).collect()
    };
    for &y in &ys {
        for &x in &xs {
            let p = y * w + x;
            let c = cost.pixel(x, y);
            let qx = x as i64 - r.0;
            let qy = y as i64 - r.1;
            if qx < 0 || qy < 0 || qx >= w as i64 || qy >= h as i64 {
                l[p * dm..(p + 1) * dm].copy_from_slice(c);
                continue;
            }
            let q = qy as usize * w + qx as usize;
            let (head, tail) = l.split_at_mut(p.max(q) * dm);
            let (prev, cur) = if q < p {
                (&head[q * dm..(q + 1) * dm], &mut tail[..dm])
            } else {
                (&tail[..dm], &mut head[p * dm..(p + 1) * dm])
            };
            let min_prev = prev.iter().copied().fold(f64::INFINITY, f64::min);
            for d in 0..dm {
                let mut best = prev[d].min(min_prev + p2);
                if d > 0 {
                    best = best.min(prev[d - 1] + p1);
                }
                if d + 1 < dm {
                    best = best.min(prev[d + 1] + p1);
                }
                cur[d] = c[d] + best - min_prev;
            }
        }
    }
    l
}

/// Index and value of the smallest entry; the first wins ties.
pub fn winner_take_all(costs: &[f64]) -> (usize, f64) {
    costs.iter().enumerate().fold(
        (0, f64::INFINITY),
        |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) },
    )
}

/// Semi-global aggregation over 4 or 8 directions. Directions are
/// evaluated independently (in parallel when enabled) and summed in a
/// fixed order.
pub fn sgm_aggregate(cost: &CostVolume, params: &SgmParams) -> Result<SgmResult> {
    if !(params.p1 >= 0.0 && params.p2 >= params.p1) {
        return Err(Error::param("p2", "penalties must satisfy p2 >= p1 >= 0"));
    }
    let paths = par::map_slice(params.directions.vectors(), |&r| {
        path_costs(cost, r, params.p1, params.p2)
    });
    let mut total = vec![0.0; cost.costs().len()];
    for l in &paths {
        for (s, v) in total.iter_mut().zip(l) {
            *s += v;
        }
    }
    let (w, h, dm) = (cost.width(), cost.height(), cost.dmax());
    let mut disparity = Vec::with_capacity(w * h);
    let mut energy = Vec::with_capacity(w * h);
    for px in total.chunks(dm) {
        let (d, e) = winner_take_all(px);
        disparity.push(d as f64);
        energy.push(e);
    }
    Ok(SgmResult {
        aggregated: CostVolume::from_raw(w, h, dm, total),
        disparity: RasterGrid::from_vec(w, h, disparity)?,
        energy: RasterGrid::from_vec(w, h, energy)?,
    })
}
