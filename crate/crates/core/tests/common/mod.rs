#![allow(dead_code)]

use geofuse::raster::{RasterGrid, TemporalStack};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_grid(rng: &mut ChaCha8Rng, w: usize, h: usize, lo: f64, hi: f64) -> RasterGrid {
    RasterGrid::from_samples(w, h, (0..w * h).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub fn random_stack(rng: &mut ChaCha8Rng, w: usize, h: usize, t: usize, lo: f64, hi: f64) -> TemporalStack {
    let grids = (0..t).map(|_| random_grid(rng, w, h, lo, hi)).collect();
    TemporalStack::with_daily_dates(grids, "b").unwrap()
}

pub fn max_abs_diff(a: &RasterGrid, b: &RasterGrid) -> f64 {
    assert_eq!(a.dims(), b.dims());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| if x.is_nan() && y.is_nan() { 0.0 } else { (x - y).abs() })
        .fold(0.0, f64::max)
}

pub fn gauss(d2: f64, sigma: f64) -> f64 {
    (-d2 / (2.0 * sigma * sigma)).exp()
}
