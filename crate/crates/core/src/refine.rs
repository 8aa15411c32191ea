//! Iterative spatiotemporal refinement of per-class probability maps.
//!
//! Every probability sample is repeatedly replaced by a weighted mean of
//! the same class's probabilities over a spatial window and all dates.
//! The weight combines spatial distance, CIELAB colour difference, and
//! nDSM height difference, each through a Gaussian kernel. Weights depend
//! only on the imagery, so they are built once per class and reused by
//! every iteration. Iteration stops when the largest relative change
//! falls below the convergence fraction.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::raster::{
    clipped_range, floor_sigma, is_nodata, validate_window, Grid, LabelGrid, Mask, RasterGrid, TemporalStack, NODATA,
    SIGMA_FLOOR,
};

/// Guard for relative-change denominators.
pub const PROBABILITY_EPS: f64 = 1e-6;

/// Weight tables above this many entries are recomputed per iteration
/// instead of cached.
const WEIGHT_CACHE_LIMIT: usize = 32 * 1024 * 1024;

// sRGB (D65) to XYZ.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412453, 0.357580, 0.180423],
    [0.212671, 0.715160, 0.072169],
    [0.019334, 0.119193, 0.950227],
];
const WHITE_D65: [f64; 3] = [0.95047, 1.0, 1.08883];

fn srgb_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Converts one sRGB triple in `[0, 1]` to CIELAB (D65, 2°).
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(srgb_linear);
    let mut xyz = [0.0; 3];
    for (row, out) in RGB_TO_XYZ.iter().zip(xyz.iter_mut()) {
        *out = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
    }
    let f = [
        lab_f(xyz[0] / WHITE_D65[0]),
        lab_f(xyz[1] / WHITE_D65[1]),
        lab_f(xyz[2] / WHITE_D65[2]),
    ];
    [116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])]
}

/// CIELAB channels of one date.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    pub l: RasterGrid,
    pub a: RasterGrid,
    pub b: RasterGrid,
}

impl LabImage {
    #[inline]
    fn at(&self, i: usize) -> [f64; 3] {
        [self.l.data()[i], self.a.data()[i], self.b.data()[i]]
    }

    pub fn dims(&self) -> (usize, usize) {
        self.l.dims()
    }
}

/// Converts a three-band composite to CIELAB. The bands fill the R, G, B
/// slots in order (for near-infrared, red, green composites pass them in
/// that order). Nodata in any band gives nodata in all outputs.
pub fn rgb_to_cielab(r: &RasterGrid, g: &RasterGrid, b: &RasterGrid) -> Result<LabImage> {
    r.ensure_dims(g)?;
    r.ensure_dims(b)?;
    let n = r.len();
    let mut out = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    for i in 0..n {
        let px = [r.data()[i], g.data()[i], b.data()[i]];
        if px.iter().any(|v| is_nodata(*v)) {
            out.iter_mut().for_each(|c| c.push(NODATA));
            continue;
        }
        if let Some(&value) = px.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange { value });
        }
        let lab = srgb_to_lab(px);
        for (c, v) in out.iter_mut().zip(lab) {
            c.push(v);
        }
    }
    let (w, h) = r.dims();
    let [l, a, bb] = out;
    Ok(LabImage {
        l: RasterGrid::from_vec(w, h, l)?,
        a: RasterGrid::from_vec(w, h, a)?,
        b: RasterGrid::from_vec(w, h, bb)?,
    })
}

/// Height bandwidth of a class: 35% of the masked nDSM range, floored.
pub fn class_height_bandwidth(ndsm: &RasterGrid, mask: &Mask) -> Result<f64> {
    ndsm.ensure_dims(mask)?;
    let (lo, hi) = ndsm
        .data()
        .iter()
        .zip(mask.data())
        .filter(|(v, m)| **m && !is_nodata(**v))
        .fold(None, |acc: Option<(f64, f64)>, (v, _)| match acc {
            None => Some((*v, *v)),
            Some((lo, hi)) => Some((lo.min(*v), hi.max(*v))),
        })
        .ok_or_else(|| Error::EmptyMask("height bandwidth".into()))?;
    Ok((0.35 * (hi - lo)).max(SIGMA_FLOOR))
}

/// Per-class probability maps for every date.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityStack {
    classes: Vec<String>,
    dates: Vec<NaiveDate>,
    /// `maps[class][date]`.
    maps: Vec<Vec<RasterGrid>>,
}

impl ProbabilityStack {
    pub fn new(classes: Vec<String>, dates: Vec<NaiveDate>, maps: Vec<Vec<RasterGrid>>) -> Result<Self> {
        if classes.is_empty() || classes.len() != maps.len() {
            return Err(Error::MismatchedStacks(format!(
                "{} class names for {} class maps",
                classes.len(),
                maps.len()
            )));
        }
        let dims = maps[0]
            .first()
            .ok_or_else(|| Error::MismatchedStacks("no dates".into()))?
            .dims();
        for (c, per_date) in maps.iter().enumerate() {
            if per_date.len() != dates.len() {
                return Err(Error::MismatchedStacks(format!(
                    "class {c} has {} maps for {} dates",
                    per_date.len(),
                    dates.len()
                )));
            }
            for (t, g) in per_date.iter().enumerate() {
                if g.dims() != dims {
                    return Err(Error::DimensionMismatch {
                        expected: dims,
                        found: g.dims(),
                    });
                }
                for (pixel, &v) in g.data().iter().enumerate() {
                    if v.is_infinite() {
                        return Err(Error::NonFiniteProbability {
                            class: c,
                            date: t,
                            pixel,
                        });
                    }
                    if !is_nodata(v) && !(0.0..=1.0).contains(&v) {
                        return Err(Error::OutOfRange { value: v });
                    }
                }
            }
        }
        if dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidStack("dates must be strictly increasing".into()));
        }
        Ok(Self { classes, dates, maps })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn date_count(&self) -> usize {
        self.dates.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.maps[0][0].dims()
    }

    pub fn map(&self, class: usize, date: usize) -> &RasterGrid {
        &self.maps[class][date]
    }

    pub fn class_maps(&self, class: usize) -> &[RasterGrid] {
        &self.maps[class]
    }

    pub fn into_maps(self) -> Vec<Vec<RasterGrid>> {
        self.maps
    }

    /// Mean valid probability of one class over all dates.
    pub fn class_mean(&self, class: usize) -> f64 {
        let (sum, n) = self.maps[class]
            .iter()
            .flat_map(|g| g.data().iter().copied())
            .filter(|v| !is_nodata(*v))
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if n == 0 {
            NODATA
        } else {
            sum / n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineParams {
    /// Spatial bandwidth, pixels.
    pub sigma_s: f64,
    /// CIELAB colour bandwidth.
    pub sigma_r: f64,
    /// Height bandwidth per class name, meters.
    pub sigma_h: BTreeMap<String, f64>,
    pub window: usize,
    /// Relative-change fraction below which iteration stops.
    pub convergence: f64,
    pub max_iter: usize,
    /// Rescale each pixel's class probabilities to sum to one after every iteration.
    pub renormalize: bool,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            sigma_s: 3.0,
            sigma_r: 5.0,
            sigma_h: BTreeMap::new(),
            window: 5,
            convergence: 0.05,
            max_iter: 20,
            renormalize: false,
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        validate_window(self.window)?;
        if !(self.convergence > 0.0 && self.convergence < 1.0) {
            return Err(Error::param("convergence", "must lie in (0, 1)"));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", "must be >= 1"));
        }
        Ok(())
    }

    fn sigma_h_for(&self, class: &str) -> Result<f64> {
        self.sigma_h
            .get(class)
            .copied()
            .map(floor_sigma)
            .ok_or_else(|| Error::param("sigma_h", format!("no bandwidth for class `{class}`")))
    }
}

/// A pixel at a date.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Site {
    pub x: usize,
    pub y: usize,
    pub t: usize,
}

/// Combined spatial, spectral, and height weight between two sites.
/// Nodata on either side yields zero.
pub fn w3d_weight(
    center: Site,
    neighbor: Site,
    lab: &[LabImage],
    ndsm: &TemporalStack,
    sigma_s: f64,
    sigma_r: f64,
    sigma_h: f64,
) -> f64 {
    let w = ndsm.width();
    let ci = center.y * w + center.x;
    let ni = neighbor.y * w + neighbor.x;
    let dx = center.x as f64 - neighbor.x as f64;
    let dy = center.y as f64 - neighbor.y as f64;
    let ca = lab[center.t].at(ci);
    let na = lab[neighbor.t].at(ni);
    let dlab2: f64 = ca.iter().zip(&na).map(|(a, b)| (a - b) * (a - b)).sum();
    let dh = ndsm.grid(center.t).data()[ci] - ndsm.grid(neighbor.t).data()[ni];
    let s = floor_sigma(sigma_s);
    let r = floor_sigma(sigma_r);
    let h = floor_sigma(sigma_h);
    let e = (dx * dx + dy * dy) / (2.0 * s * s) + dlab2 / (2.0 * r * r) + dh * dh / (2.0 * h * h);
    if e.is_nan() {
        0.0
    } else {
        (-e).exp()
    }
}

/// Weights of one class for every (date, pixel), laid out as
/// `[(t * n + i) * k + slot]` with `slot` enumerating window offsets × dates.
struct WeightTable {
    half: usize,
    width: usize,
    height: usize,
    dates: usize,
    k: usize,
    cached: Option<Vec<f64>>,
}

impl WeightTable {
    fn new(width: usize, height: usize, dates: usize, window: usize) -> Self {
        let half = window / 2;
        Self {
            half,
            width,
            height,
            dates,
            k: window * window * dates,
            cached: None,
        }
    }

    /// Fills `out` (length `k`) with the weights of the site `(i, t)`;
    /// out-of-frame slots get zero.
    fn row(&self, i: usize, t: usize, ctx: &Ctx<'_>, out: &mut [f64]) {
        let (x, y) = (i % self.width, i / self.width);
        let win = 2 * self.half + 1;
        out.iter_mut().for_each(|v| *v = 0.0);
        let center = Site { x, y, t };
        for jy in clipped_range(y, self.half, self.height) {
            for jx in clipped_range(x, self.half, self.width) {
                let oy = jy + self.half - y;
                let ox = jx + self.half - x;
                for s in 0..self.dates {
                    let slot = (oy * win + ox) * self.dates + s;
                    out[slot] = w3d_weight(
                        center,
                        Site { x: jx, y: jy, t: s },
                        ctx.lab,
                        ctx.ndsm,
                        ctx.sigma_s,
                        ctx.sigma_r,
                        ctx.sigma_h,
                    );
                }
            }
        }
    }

    fn build_cache(&mut self, ctx: &Ctx<'_>) {
        let n = self.width * self.height;
        let total = n * self.dates * self.k;
        if total > WEIGHT_CACHE_LIMIT {
            log::debug!("refine: {total} weights exceed cache limit; recomputing per iteration");
            return;
        }
        let rows = par::map_indices(n * self.dates, |site| {
            let mut row = vec![0.0; self.k];
            self.row(site % n, site / n, ctx, &mut row);
            row
        });
        self.cached = Some(rows.concat());
    }

    fn update_site(&self, i: usize, t: usize, ctx: &Ctx<'_>, prev: &[RasterGrid]) -> f64 {
        let n = self.width * self.height;
        let mut scratch;
        let row: &[f64] = match &self.cached {
            Some(c) => {
                let start = (t * n + i) * self.k;
                &c[start..start + self.k]
            }
            None => {
                scratch = vec![0.0; self.k];
                self.row(i, t, ctx, &mut scratch);
                &scratch
            }
        };
        let (x, y) = (i % self.width, i / self.width);
        let win = 2 * self.half + 1;
        let (mut num, mut den) = (0.0, 0.0);
        for jy in clipped_range(y, self.half, self.height) {
            for jx in clipped_range(x, self.half, self.width) {
                let j = jy * self.width + jx;
                let base = ((jy + self.half - y) * win + (jx + self.half - x)) * self.dates;
                for (s, grid) in prev.iter().enumerate() {
                    let w = row[base + s];
                    let p = grid.data()[j];
                    if w > 0.0 && !is_nodata(p) {
                        num += w * p;
                        den += w;
                    }
                }
            }
        }
        if den > 0.0 {
            num / den
        } else {
            NODATA
        }
    }
}

struct Ctx<'a> {
    lab: &'a [LabImage],
    ndsm: &'a TemporalStack,
    sigma_s: f64,
    sigma_r: f64,
    sigma_h: f64,
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub probs: ProbabilityStack,
    pub iterations: usize,
    /// Largest relative change after each iteration.
    pub history: Vec<f64>,
}

fn check_inputs(probs: &ProbabilityStack, lab: &[LabImage], ndsm: &TemporalStack) -> Result<()> {
    let dims = probs.dims();
    if lab.len() != probs.date_count() || ndsm.len() != probs.date_count() {
        return Err(Error::MismatchedStacks(format!(
            "{} probability dates, {} CIELAB images, {} nDSM grids",
            probs.date_count(),
            lab.len(),
            ndsm.len()
        )));
    }
    if ndsm.dims() != dims || lab.iter().any(|l| l.dims() != dims) {
        return Err(Error::MismatchedStacks("grid dimensions differ".into()));
    }
    Ok(())
}

/// Largest `|new - old| / max(new, ε)` over pixels valid in both.
pub fn relative_change(new: &[RasterGrid], old: &[RasterGrid]) -> f64 {
    new.iter()
        .zip(old)
        .flat_map(|(a, b)| a.data().iter().zip(b.data()))
        .filter(|(a, b)| !is_nodata(**a) && !is_nodata(**b))
        .map(|(a, b)| (a - b).abs() / a.max(PROBABILITY_EPS))
        .fold(0.0, f64::max)
}

/// Runs the iterative refinement. All classes advance together, one
/// Jacobi sweep per iteration, until the largest relative change across
/// classes drops below `params.convergence` or `max_iter` is reached.
pub fn refine_probabilities(
    probs: &ProbabilityStack,
    lab: &[LabImage],
    ndsm: &TemporalStack,
    params: &RefineParams,
) -> Result<RefineOutcome> {
    params.validate()?;
    check_inputs(probs, lab, ndsm)?;
    let (w, h) = probs.dims();
    let n = w * h;
    let dates = probs.date_count();

    let mut tables = Vec::with_capacity(probs.class_count());
    for name in probs.classes() {
        let ctx = Ctx {
            lab,
            ndsm,
            sigma_s: params.sigma_s,
            sigma_r: params.sigma_r,
            sigma_h: params.sigma_h_for(name)?,
        };
        let mut table = WeightTable::new(w, h, dates, params.window);
        table.build_cache(&ctx);
        tables.push((table, ctx.sigma_h));
    }

    let mut current: Vec<Vec<RasterGrid>> = probs.maps.clone();
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        let mut next: Vec<Vec<RasterGrid>> = current
            .iter()
            .zip(&tables)
            .map(|(prev, (table, sigma_h))| {
                let ctx = Ctx {
                    lab,
                    ndsm,
                    sigma_s: params.sigma_s,
                    sigma_r: params.sigma_r,
                    sigma_h: *sigma_h,
                };
                let flat = par::map_indices(n * dates, |site| table.update_site(site % n, site / n, &ctx, prev));
                flat.chunks(n)
                    .map(|c| Grid::from_vec(w, h, c.to_vec()).expect("dims"))
                    .collect()
            })
            .collect();
        if params.renormalize {
            renormalize(&mut next);
        }
        let change = next
            .iter()
            .zip(&current)
            .map(|(a, b)| relative_change(a, b))
            .fold(0.0, f64::max);
        history.push(change);
        current = next;
        if change < params.convergence {
            break;
        }
    }
    let probs = ProbabilityStack::new(probs.classes.clone(), probs.dates.clone(), current)?;
    Ok(RefineOutcome {
        probs,
        iterations,
        history,
    })
}

fn renormalize(maps: &mut [Vec<RasterGrid>]) {
    let dates = maps[0].len();
    let n = maps[0][0].len();
    for t in 0..dates {
        for i in 0..n {
            let sum: f64 = maps.iter().map(|c| c[t].data()[i]).filter(|v| !is_nodata(*v)).sum();
            if sum > 0.0 {
                for c in maps.iter_mut() {
                    let v = &mut c[t].data_mut()[i];
                    if !is_nodata(*v) {
                        *v /= sum;
                    }
                }
            }
        }
    }
}

/// Per-pixel index of the most probable class; ties go to the lowest
/// class index. Pixels where every class is nodata get no label.
pub fn classify_argmax_maps(maps: &[&RasterGrid]) -> Result<LabelGrid> {
    let first = maps
        .first()
        .ok_or_else(|| Error::param("classes", "need at least one class"))?;
    for m in maps {
        first.ensure_dims(*m)?;
    }
    let (w, h) = first.dims();
    Ok(Grid::from_fn(w, h, |x, y| {
        let i = y * w + x;
        let mut best: Option<(u16, f64)> = None;
        for (c, m) in maps.iter().enumerate() {
            let v = m.data()[i];
            if is_nodata(v) {
                continue;
            }
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((c as u16, v));
            }
        }
        best.map(|(c, _)| c)
    }))
}

/// Argmax labels of one date.
pub fn classify_argmax(probs: &ProbabilityStack, date: usize) -> Result<LabelGrid> {
    let maps: Vec<&RasterGrid> = (0..probs.class_count()).map(|c| probs.map(c, date)).collect();
    classify_argmax_maps(&maps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dates(n: usize) -> Vec<NaiveDate> {
        (0..n)
            .map(|i| NaiveDate::from_ymd_opt(2020, 1, 1 + i as u32).unwrap())
            .collect()
    }

    #[test]
    fn lab_reference_points() {
        assert_eq!(srgb_to_lab([0.0; 3]), [0.0, 0.0, 0.0]);
        let white = srgb_to_lab([1.0; 3]);
        assert!((white[0] - 100.0).abs() < 1e-3);
        assert!(white[1].abs() < 0.01 && white[2].abs() < 0.01);
        // Reference values from an independent colour-science implementation.
        let lab = srgb_to_lab([0.5, 0.2, 0.2]);
        let golden = [32.16497778262049, 33.13436956553886, 16.812294051182384];
        for (a, b) in lab.iter().zip(golden) {
            assert!((a - b).abs() < 1e-6, "{lab:?}");
        }
    }

    #[test]
    fn lab_rejects_out_of_range() {
        let r = RasterGrid::filled(1, 1, 1.2);
        let g = RasterGrid::filled(1, 1, 0.5);
        assert!(matches!(rgb_to_cielab(&r, &g, &g), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn height_bandwidth() {
        let ndsm = RasterGrid::from_samples(3, 1, vec![2.0, 12.0, 50.0]).unwrap();
        let mask = Grid::from_vec(3, 1, vec![true, true, false]).unwrap();
        assert!((class_height_bandwidth(&ndsm, &mask).unwrap() - 3.5).abs() < 1e-12);
        let flat = RasterGrid::filled(3, 1, 4.0);
        assert_eq!(class_height_bandwidth(&flat, &mask).unwrap(), SIGMA_FLOOR);
        let none = Grid::filled(3, 1, false);
        assert!(matches!(class_height_bandwidth(&ndsm, &none), Err(Error::EmptyMask(_))));
    }

    #[test]
    fn argmax_ties_and_nodata() {
        let a = RasterGrid::from_samples(3, 1, vec![0.7, 0.4, NODATA]).unwrap();
        let b = RasterGrid::from_samples(3, 1, vec![0.2, 0.4, NODATA]).unwrap();
        let c = RasterGrid::from_samples(3, 1, vec![0.1, 0.2, NODATA]).unwrap();
        let labels = classify_argmax_maps(&[&a, &b, &c]).unwrap();
        assert_eq!(labels.data(), &[Some(0), Some(0), None]);
    }

    #[test]
    fn probability_stack_validation() {
        let bad = RasterGrid::filled(2, 2, 1.5);
        assert!(ProbabilityStack::new(vec!["a".into()], dates(1), vec![vec![bad]]).is_err());
        let ok = RasterGrid::filled(2, 2, 0.5);
        assert!(ProbabilityStack::new(vec!["a".into()], dates(2), vec![vec![ok]]).is_err());
    }

    #[test]
    fn missing_class_bandwidth_is_an_error() {
        let g = RasterGrid::filled(2, 2, 0.5);
        let probs = ProbabilityStack::new(vec!["a".into()], dates(1), vec![vec![g.clone()]]).unwrap();
        let lab = rgb_to_cielab(&g, &g, &g).unwrap();
        let ndsm = TemporalStack::new(vec![g], dates(1), "ndsm").unwrap();
        let err = refine_probabilities(&probs, &[lab], &ndsm, &RefineParams::default());
        assert!(matches!(err, Err(Error::InvalidParameter { name: "sigma_h", .. })));
    }
}
