//! Evaluation metrics: RMSE, completeness, recall/precision/F1, Otsu
//! change detection, robust R², and classification accuracy.
//!
//! Reductions run sequentially with compensated summation so results do
//! not depend on the worker count.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::raster::{is_nodata, Grid, LabelGrid, Mask, MultiBandStack, RasterGrid};

/// Kahan–Babuška summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        for v in iter {
            s.add(v);
        }
        s
    }
}

/// Root mean squared difference over pixels valid in both grids.
pub fn rmse(pred: &RasterGrid, gt: &RasterGrid) -> Result<f64> {
    pred.ensure_dims(gt)?;
    let mut n = 0usize;
    let sum: CompensatedSum = pred
        .data()
        .iter()
        .zip(gt.data())
        .filter(|(p, g)| !is_nodata(**p) && !is_nodata(**g))
        .map(|(p, g)| {
            n += 1;
            (p - g) * (p - g)
        })
        .collect();
    if n == 0 {
        return Err(Error::NoOverlap);
    }
    Ok((sum.value() / n as f64).sqrt())
}

/// Percentage of pixels carrying a valid value.
pub fn completeness(pred: &RasterGrid) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    100.0 * pred.valid_count() as f64 / pred.len() as f64
}

/// Percentage of pixels whose prediction is valid and within `tolerance`
/// of a valid ground truth. Offered as an alternative definition.
pub fn completeness_within(pred: &RasterGrid, gt: &RasterGrid, tolerance: f64) -> Result<f64> {
    pred.ensure_dims(gt)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let hits = pred
        .data()
        .iter()
        .zip(gt.data())
        .filter(|(p, g)| !is_nodata(**p) && !is_nodata(**g) && (*p - *g).abs() <= tolerance)
        .count();
    Ok(100.0 * hits as f64 / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn from_masks(pred: &Mask, gt: &Mask) -> Result<Self> {
        pred.ensure_dims(gt)?;
        let mut c = Self::default();
        for (&p, &g) in pred.data().iter().zip(gt.data()) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    /// Actual positives.
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    /// Actual negatives.
    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf1 {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    /// Set when some ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

fn ratio(num: f64, den: f64, degenerate: &mut bool) -> f64 {
    if den == 0.0 {
        *degenerate = true;
        0.0
    } else {
        num / den
    }
}

/// Harmonic mean of recall and precision; 0 when both are 0.
pub fn f1_score(recall: f64, precision: f64) -> f64 {
    if recall + precision == 0.0 {
        0.0
    } else {
        2.0 * recall * precision / (recall + precision)
    }
}

/// Recall, precision, and F1 of a binary prediction.
///
/// In normalized mode the counts are first turned into class rates
/// (`tp/P`, `fp/N`) so that precision is insensitive to class imbalance.
pub fn prf1(pred: &Mask, gt: &Mask, normalized: bool) -> Result<Prf1> {
    Ok(prf1_from_counts(&ConfusionCounts::from_masks(pred, gt)?, normalized))
}

pub fn prf1_from_counts(c: &ConfusionCounts, normalized: bool) -> Prf1 {
    let mut degenerate = false;
    let recall = ratio(c.tp as f64, c.positives() as f64, &mut degenerate);
    let precision = if normalized {
        let tp_rate = recall;
        let fp_rate = ratio(c.fp as f64, c.negatives() as f64, &mut degenerate);
        ratio(tp_rate, tp_rate + fp_rate, &mut degenerate)
    } else {
        ratio(c.tp as f64, (c.tp + c.fp) as f64, &mut degenerate)
    };
    let f1 = f1_score(recall, precision);
    Prf1 {
        recall,
        precision,
        f1,
        degenerate,
    }
}

/// Histogram of values rounded and clamped to `0..=255`; nodata skipped.
pub fn histogram_256(values: &RasterGrid) -> [u64; 256] {
    let mut h = [0u64; 256];
    for v in values.data().iter().filter(|v| !is_nodata(**v)) {
        h[v.round().clamp(0.0, 255.0) as usize] += 1;
    }
    h
}

/// Otsu threshold of a 256-bin histogram. Bins `0..=t` form the lower
/// class. Every cut is scored by its between-class variance; the lowest
/// maximizing cut wins.
pub fn otsu_threshold(hist: &[u64; 256]) -> Result<u8> {
    if hist.iter().filter(|c| **c > 0).count() < 2 {
        return Err(Error::ConstantInput);
    }
    let total: u64 = hist.iter().sum();
    let total_sum: u128 = hist.iter().enumerate().map(|(i, &c)| i as u128 * c as u128).sum();
    let (mut n0, mut s0) = (0u64, 0u128);
    let mut best: Option<(u8, f64)> = None;
    for (t, &count) in hist.iter().enumerate().take(255) {
        n0 += count;
        s0 += t as u128 * count as u128;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s1 = total_sum - s0;
        // n0·n1·(μ0 − μ1)² = (s0·n1 − s1·n0)² / (n0·n1), up to the constant 1/N².
        let diff = s0 as f64 * n1 as f64 - s1 as f64 * n0 as f64;
        let score = diff * diff / (n0 as f64 * n1 as f64);
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((t as u8, score));
        }
    }
    best.map(|(t, _)| t).ok_or(Error::ConstantInput)
}

/// Otsu threshold of a grid whose values are on a 0–255 scale.
pub fn otsu_threshold_grid(values: &RasterGrid) -> Result<u8> {
    otsu_threshold(&histogram_256(values))
}

/// Change mask between two co-registered band sets by image differencing.
///
/// The per-pixel Euclidean norm of band differences is scaled so its
/// maximum maps to 255, rounded, and cut at the Otsu threshold; pixels
/// above it are changes. Identical inputs give an all-false mask.
pub fn change_mask_from_bands(a: &[&RasterGrid], b: &[&RasterGrid]) -> Result<Mask> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::param("bands", "both dates need the same non-zero band count"));
    }
    let (w, h) = a[0].dims();
    for g in a.iter().chain(b) {
        a[0].ensure_dims(*g)?;
    }
    let norm: Vec<f64> = (0..w * h)
        .map(|i| {
            let mut s = 0.0;
            for (ga, gb) in a.iter().zip(b) {
                let d = ga.data()[i] - gb.data()[i];
                s += d * d;
            }
            s.sqrt()
        })
        .collect();
    let max = norm.iter().copied().filter(|v| !is_nodata(*v)).fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(Grid::filled(w, h, false));
    }
    let scaled = RasterGrid::from_vec(w, h, norm.iter().map(|v| (v / max * 255.0).round()).collect())?;
    let t = match otsu_threshold_grid(&scaled) {
        Ok(t) => t as f64,
        Err(Error::ConstantInput) => return Ok(Grid::filled(w, h, false)),
        Err(e) => return Err(e),
    };
    Ok(scaled.map(|v| !is_nodata(*v) && *v > t))
}

/// [`change_mask_from_bands`] between two dates of a multiband stack.
pub fn change_mask(stack: &MultiBandStack, date_a: usize, date_b: usize) -> Result<Mask> {
    let n = stack.date_count();
    if date_a >= n || date_b >= n {
        return Err(Error::param("date", format!("date index out of range (have {n})")));
    }
    change_mask_from_bands(&stack.date_slice(date_a), &stack.date_slice(date_b))
}

/// Bisquare tuning constant.
pub const BISQUARE_C: f64 = 4.685;
const IRLS_MAX_ITER: usize = 50;
const IRLS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub weights: Vec<f64>,
    pub iterations: usize,
}

fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64)> {
    let sw: f64 = w.iter().sum();
    if sw <= 0.0 {
        return None;
    }
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

fn median_abs(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().map(|r| r.abs()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Robust straight-line fit by iteratively reweighted least squares with
/// Tukey bisquare weights. The residual scale is `MAD / 0.6745`.
pub fn robust_line_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::param("y", "x and y lengths differ"));
    }
    if x.len() < 3 {
        return Err(Error::param("x", "need at least three points"));
    }
    if x.iter().all(|v| *v == x[0]) {
        return Err(Error::DegenerateX);
    }
    let n = x.len();
    let mut weights = vec![1.0; n];
    let (mut a, mut b) = weighted_line(x, y, &weights).ok_or(Error::DegenerateX)?;
    let y_scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let mut iterations = 0;
    for _ in 0..IRLS_MAX_ITER {
        iterations += 1;
        let resid: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| yi - (a + b * xi)).collect();
        let scale = (median_abs(&resid) / 0.6745).max(1e-12 * y_scale);
        for (w, r) in weights.iter_mut().zip(&resid) {
            let u = r / (BISQUARE_C * scale);
            *w = if u.abs() < 1.0 { (1.0 - u * u).powi(2) } else { 0.0 };
        }
        let Some((na, nb)) = weighted_line(x, y, &weights) else {
            break;
        };
        let step = (na - a).abs().max((nb - b).abs());
        a = na;
        b = nb;
        if step <= IRLS_TOL * (1.0 + a.abs().max(b.abs())) {
            break;
        }
    }
    Ok(LineFit {
        intercept: a,
        slope: b,
        weights,
        iterations,
    })
}

/// Goodness of fit `(s0² − s1²) / s0²` of a robust line fit.
///
/// `s0²` is the weighted sum of squares of `y` about its weighted mean and
/// `s1²` the weighted residual sum of squares, both with the final
/// bisquare weights, so points rejected by the fit do not count.
pub fn robust_r2(x: &[f64], y: &[f64]) -> Result<f64> {
    let fit = robust_line_fit(x, y)?;
    Ok(weighted_r2(x, y, &fit))
}

fn weighted_r2(x: &[f64], y: &[f64], fit: &LineFit) -> f64 {
    let w = &fit.weights;
    let sw: f64 = w.iter().sum();
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let s0: f64 = y.iter().zip(w).map(|(v, wi)| wi * (v - my) * (v - my)).sum();
    let s1: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((xi, yi), wi)| {
            let r = yi - (fit.intercept + fit.slope * xi);
            wi * r * r
        })
        .sum();
    if s0 == 0.0 {
        return if s1 == 0.0 { 1.0 } else { 0.0 };
    }
    (s0 - s1) / s0
}

/// Ordinary least-squares R² for comparison.
pub fn ols_r2(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::param("x", "need at least three paired points"));
    }
    let w = vec![1.0; x.len()];
    let (a, b) = weighted_line(x, y, &w).ok_or(Error::DegenerateX)?;
    Ok(weighted_r2(
        x,
        y,
        &LineFit {
            intercept: a,
            slope: b,
            weights: w,
            iterations: 0,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Accuracy {
    /// Fraction of labelled pixels predicted correctly.
    pub overall: f64,
    /// Per ground-truth class: correct / class count. Classes absent from
    /// the ground truth are omitted.
    pub per_class: BTreeMap<u16, f64>,
}

/// Overall and per-class accuracy over pixels with a ground-truth label.
pub fn accuracy(pred: &LabelGrid, gt: &LabelGrid, classes: &[u16]) -> Result<Accuracy> {
    pred.ensure_dims(gt)?;
    let mut correct = 0u64;
    let mut total = 0u64;
    let mut per: BTreeMap<u16, (u64, u64)> = BTreeMap::new();
    for (p, g) in pred.data().iter().zip(gt.data()) {
        let Some(g) = g else { continue };
        total += 1;
        let hit = *p == Some(*g);
        if hit {
            correct += 1;
        }
        let e = per.entry(*g).or_default();
        e.1 += 1;
        if hit {
            e.0 += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyGt);
    }
    let per_class = per
        .into_iter()
        .filter(|(c, _)| classes.is_empty() || classes.contains(c))
        .map(|(c, (ok, n))| (c, ok as f64 / n as f64))
        .collect();
    Ok(Accuracy {
        overall: correct as f64 / total as f64,
        per_class,
    })
}
