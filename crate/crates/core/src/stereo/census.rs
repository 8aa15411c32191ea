use crate::error::{Error, Result};
use crate::par;
use crate::raster::{validate_window, RasterGrid};

/// Largest window whose bit string fits in a `u128`.
pub const MAX_CENSUS_WINDOW: usize = 11;

/// Census bit strings of an image.
///
/// Bit `k` of a pixel's code corresponds to the `k`-th window offset in
/// row-major order with the centre skipped, and is set when that neighbour
/// is strictly brighter than the centre. Offsets that fall outside the
/// image keep their bit position and read as zero, so codes near the
/// border stay aligned with interior codes.
#[derive(Debug, Clone, PartialEq)]
pub struct CensusGrid {
    width: usize,
    height: usize,
    window: usize,
    codes: Vec<u128>,
}

impl CensusGrid {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn code(&self, x: usize, y: usize) -> u128 {
        self.codes[y * self.width + x]
    }

    /// Bits of one pixel in row-major window order.
    pub fn bits(&self, x: usize, y: usize) -> Vec<bool> {
        let code = self.code(x, y);
        (0..self.window * self.window - 1).map(|k| code >> k & 1 == 1).collect()
    }
}

#[inline]
pub fn hamming(a: u128, b: u128) -> u32 {
    (a ^ b).count_ones()
}

pub fn census_transform(image: &RasterGrid, window: usize) -> Result<CensusGrid> {
    validate_window(window)?;
    if window > MAX_CENSUS_WINDOW {
        return Err(Error::param(
            "window",
            format!("census window must be <= {MAX_CENSUS_WINDOW}"),
        ));
    }
    let (w, h) = image.dims();
    let half = (window / 2) as i64;
    let codes = par::map_indices(w * h, |i| {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        let center = image.data()[i];
        let mut code = 0u128;
        let mut bit = 0;
        for dy in -half..=half {
            for dx in -half..=half {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (nx, ny) = (x + dx, y + dy);
                if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                    let v = image.data()[ny as usize * w + nx as usize];
                    // NaN compares false either way and leaves the bit clear.
                    if v > center {
                        code |= 1u128 << bit;
                    }
                }
                bit += 1;
            }
        }
        code
    });
    Ok(CensusGrid {
        width: w,
        height: h,
        window,
        codes,
    })
}

/// Matching costs `C(x, y, d)` for `d` in `0..dmax`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    dmax: usize,
    costs: Vec<f64>,
}

impl CostVolume {
    /// `costs` is laid out as `[(y * width + x) * dmax + d]`.
    pub fn new(width: usize, height: usize, dmax: usize, costs: Vec<f64>) -> Result<Self> {
        if dmax == 0 {
            return Err(Error::param("dmax", "must be >= 1"));
        }
        if costs.len() != width * height * dmax {
            return Err(Error::SampleCount {
                width: width * dmax,
                height,
                actual: costs.len(),
            });
        }
        if let Some(index) = costs.iter().position(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::param("costs", format!("cost {index} is negative or not finite")));
        }
        Ok(Self {
            width,
            height,
            dmax,
            costs,
        })
    }

    pub(crate) fn from_raw(width: usize, height: usize, dmax: usize, costs: Vec<f64>) -> Self {
        Self {
            width,
            height,
            dmax,
            costs,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dmax(&self) -> usize {
        self.dmax
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, d: usize) -> f64 {
        self.costs[(y * self.width + x) * self.dmax + d]
    }

    /// All disparity costs of one pixel.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let start = (y * self.width + x) * self.dmax;
        &self.costs[start..start + self.dmax]
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }
}

/// Census/Hamming cost volume for a rectified pair. Matches that fall left
/// of the right image cost `window²`, one more than any real distance.
pub fn census_cost_volume(left: &RasterGrid, right: &RasterGrid, dmax: usize, window: usize) -> Result<CostVolume> {
    left.ensure_dims(right)?;
    if dmax == 0 {
        return Err(Error::param("dmax", "must be >= 1"));
    }
    let cl = census_transform(left, window)?;
    let cr = census_transform(right, window)?;
    let sentinel = (window * window) as f64;
    let (w, h) = left.dims();
    let rows = par::map_indices(w * h, |i| {
        let (x, y) = (i % w, i / w);
        let code = cl.code(x, y);
        (0..dmax)
            .map(|d| {
                if d > x {
                    sentinel
                } else {
                    hamming(code, cr.code(x - d, y)) as f64
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(CostVolume::from_raw(w, h, dmax, rows.concat()))
}
