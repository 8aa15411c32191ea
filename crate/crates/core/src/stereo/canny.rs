use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::raster::{is_nodata, Grid, Mask, RasterGrid};

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

#[inline]
fn clamp_idx(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// Separable convolution with replicated borders.
fn convolve_sep(data: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as i64;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * data[y * w + clamp_idx(x as i64 + i as i64 - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[clamp_idx(y as i64 + i as i64 - r, h) * w + x])
                .sum();
        }
    }
    out
}

struct Gradients {
    magnitude: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

fn gradients(image: &RasterGrid, sigma: f64) -> Gradients {
    let (w, h) = image.dims();
    // Nodata is filled with the valid mean before smoothing.
    let valid: Vec<f64> = image.data().iter().copied().filter(|v| !is_nodata(*v)).collect();
    let fill = if valid.is_empty() {
        0.0
    } else {
        valid.iter().sum::<f64>() / valid.len() as f64
    };
    let filled: Vec<f64> = image
        .data()
        .iter()
        .map(|v| if is_nodata(*v) { fill } else { *v })
        .collect();
    let smooth = if sigma > 0.0 {
        convolve_sep(&filled, w, h, &gaussian_kernel(sigma))
    } else {
        filled
    };
    let at = |x: i64, y: i64| smooth[clamp_idx(y, h) * w + clamp_idx(x, w)];
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut magnitude = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let i = y as usize * w + x as usize;
            gx[i] = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            gy[i] = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            magnitude[i] = gx[i].hypot(gy[i]);
        }
    }
    Gradients { magnitude, gx, gy }
}

/// Canny edges with absolute Sobel-magnitude thresholds: Gaussian
/// smoothing, Sobel gradients, non-maximum suppression along the
/// quantized gradient direction, and 8-connected hysteresis.
/// Nodata pixels are never edges.
pub fn canny_edges(image: &RasterGrid, low: f64, high: f64, gaussian_sigma: f64) -> Result<Mask> {
    if !(low > 0.0 && high >= low) {
        return Err(Error::param("high", "thresholds must satisfy high >= low > 0"));
    }
    let (w, h) = image.dims();
    let g = gradients(image, gaussian_sigma);
    let mag = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            0.0
        } else {
            g.magnitude[y as usize * w + x as usize]
        }
    };
    // 0: horizontal gradient, 1: 45°, 2: vertical, 3: 135° (image y grows downward).
    let mut thin = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = g.magnitude[i];
            if m == 0.0 {
                continue;
            }
            let angle = g.gy[i].atan2(g.gx[i]).to_degrees().rem_euclid(180.0);
            let (dx, dy) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let (xi, yi) = (x as i64, y as i64);
            let before = mag(xi - dx, yi - dy);
            let after = mag(xi + dx, yi + dy);
            // Asymmetric comparison keeps one pixel of a plateau.
            if m > before && m >= after {
                thin[i] = m;
            }
        }
    }
    let mut edges = vec![false; w * h];
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= high && !is_nodata(image.data()[i]) {
            edges[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(p) = queue.pop_front() {
        let (x, y) = ((p % w) as i64, (p / w) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let q = ny as usize * w + nx as usize;
                if !edges[q] && thin[q] >= low && !is_nodata(image.data()[q]) {
                    edges[q] = true;
                    queue.push_back(q);
                }
            }
        }
    }
    Grid::from_vec(w, h, edges)
}

/// Canny with thresholds given as fractions of the largest gradient
/// magnitude. An image without gradient has no edges.
pub fn canny_edges_relative(
    image: &RasterGrid,
    low_fraction: f64,
    high_fraction: f64,
    gaussian_sigma: f64,
) -> Result<Mask> {
    let max = gradients(image, gaussian_sigma)
        .magnitude
        .into_iter()
        .fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(Grid::filled(image.width(), image.height(), false));
    }
    canny_edges(image, low_fraction * max, high_fraction * max, gaussian_sigma)
}
