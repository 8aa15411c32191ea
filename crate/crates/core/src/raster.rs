//! Grids, temporal stacks, class masks, and bandwidths.
//!
//! Nodata is represented by NaN. Weighted operations give nodata samples
//! zero weight and only emit nodata when the total weight of a pixel is
//! zero.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nodata sentinel for real-valued grids.
pub const NODATA: f64 = f64::NAN;

/// Lower bound applied to every Gaussian bandwidth.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[inline]
pub fn is_nodata(v: f64) -> bool {
    v.is_nan()
}

#[inline]
pub fn floor_sigma(sigma: f64) -> f64 {
    if sigma.is_nan() {
        SIGMA_FLOOR
    } else {
        sigma.max(SIGMA_FLOOR)
    }
}

/// `exp(-d² / (2σ²))` given the squared distance.
#[inline]
pub fn gaussian(dist_sq: f64, sigma: f64) -> f64 {
    let s = floor_sigma(sigma);
    (-dist_sq / (2.0 * s * s)).exp()
}

/// Inclusive index range of a window of half-width `half` around `c`,
/// clipped to `[0, len)`.
#[inline]
pub fn clipped_range(c: usize, half: usize, len: usize) -> std::ops::RangeInclusive<usize> {
    c.saturating_sub(half)..=(c + half).min(len - 1)
}

/// Row-major 2D grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type RasterGrid = Grid<f64>;
pub type Mask = Grid<bool>;
/// Class labels; `None` marks unlabelled pixels.
pub type LabelGrid = Grid<Option<u16>>;

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::SampleCount {
                width,
                height,
                actual: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.dims() == other.dims()
    }

    pub fn ensure_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            })
        }
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T: Copy> Grid<T> {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let i = self.index(x, y);
        self.data[i] = value;
    }
}

impl Grid<f64> {
    /// Builds a real grid, rejecting infinite samples.
    pub fn from_samples(width: usize, height: usize, samples: Vec<f64>) -> Result<Self> {
        if let Some(index) = samples.iter().position(|v| v.is_infinite()) {
            return Err(Error::NonFiniteSample { index });
        }
        Self::from_vec(width, height, samples)
    }

    pub fn nodata(width: usize, height: usize) -> Self {
        Self::filled(width, height, NODATA)
    }

    #[inline]
    pub fn is_valid_at(&self, index: usize) -> bool {
        !is_nodata(self.data[index])
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|v| !is_nodata(**v)).count()
    }

    pub fn nodata_count(&self) -> usize {
        self.len() - self.valid_count()
    }

    /// `(min, max)` over valid samples.
    pub fn valid_range(&self) -> Option<(f64, f64)> {
        self.data
            .iter()
            .copied()
            .filter(|v| !is_nodata(*v))
            .fold(None, |acc, v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }

    pub fn valid_mask(&self) -> Mask {
        self.map(|v| !is_nodata(*v))
    }

    /// Nodata-aware equality: NaN compares equal to NaN.
    pub fn nodata_eq(&self, other: &RasterGrid) -> bool {
        self.same_dims(other)
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| (is_nodata(*a) && is_nodata(*b)) || a.to_bits() == b.to_bits())
    }
}

/// Result of [`normalize_unit`].
#[derive(Debug, Clone)]
pub struct Normalized {
    pub grid: RasterGrid,
    pub min: f64,
    pub max: f64,
    /// Set when every valid sample had the same value; the grid is then all zero.
    pub constant: bool,
}

/// Maps valid samples affinely onto `[0, 1]`.
pub fn normalize_unit(grid: &RasterGrid) -> Result<Normalized> {
    let (min, max) = grid.valid_range().ok_or(Error::AllNodata)?;
    if max == min {
        log::warn!("normalize_unit: constant grid ({min}); returning zeros");
        return Ok(Normalized {
            grid: grid.map(|v| if is_nodata(*v) { NODATA } else { 0.0 }),
            min,
            max,
            constant: true,
        });
    }
    let span = max - min;
    Ok(Normalized {
        grid: grid.map(|v| (v - min) / span),
        min,
        max,
        constant: false,
    })
}

/// Inverse of [`normalize_unit`].
pub fn denormalize(grid: &RasterGrid, min: f64, max: f64) -> RasterGrid {
    let span = max - min;
    grid.map(|v| v * span + min)
}

/// Land-cover class used for masks and per-class bandwidths.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SurfaceClass {
    Building,
    GroundRoad,
    Tree,
    Grass,
    Water,
    Custom(String),
}

impl SurfaceClass {
    pub fn as_str(&self) -> &str {
        match self {
            SurfaceClass::Building => "building",
            SurfaceClass::GroundRoad => "ground_road",
            SurfaceClass::Tree => "tree",
            SurfaceClass::Grass => "grass",
            SurfaceClass::Water => "water",
            SurfaceClass::Custom(s) => s,
        }
    }
}

impl fmt::Display for SurfaceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SurfaceClass {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "building" => SurfaceClass::Building,
            "ground_road" | "ground" | "road" => SurfaceClass::GroundRoad,
            "tree" => SurfaceClass::Tree,
            "grass" => SurfaceClass::Grass,
            "water" => SurfaceClass::Water,
            other => SurfaceClass::Custom(other.to_string()),
        })
    }
}

impl Serialize for SurfaceClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for SurfaceClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(s.parse().unwrap_or_else(|e: std::convert::Infallible| match e {}))
    }
}

/// Named boolean masks over a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMaskSet {
    width: usize,
    height: usize,
    masks: Vec<(SurfaceClass, Mask)>,
    overlapping: bool,
}

impl ClassMaskSet {
    /// Builds a disjoint mask set.
    pub fn new(width: usize, height: usize, masks: Vec<(SurfaceClass, Mask)>) -> Result<Self> {
        Self::build(width, height, masks, false)
    }

    /// Builds a mask set whose members may overlap.
    pub fn new_overlapping(width: usize, height: usize, masks: Vec<(SurfaceClass, Mask)>) -> Result<Self> {
        Self::build(width, height, masks, true)
    }

    fn build(width: usize, height: usize, masks: Vec<(SurfaceClass, Mask)>, overlapping: bool) -> Result<Self> {
        for (_, m) in &masks {
            if m.dims() != (width, height) {
                return Err(Error::DimensionMismatch {
                    expected: (width, height),
                    found: m.dims(),
                });
            }
        }
        if !overlapping {
            let mut hits = vec![false; width * height];
            for (_, m) in &masks {
                for (i, &on) in m.data().iter().enumerate() {
                    if on {
                        if hits[i] {
                            return Err(Error::OverlappingMasks(i));
                        }
                        hits[i] = true;
                    }
                }
            }
        }
        Ok(Self {
            width,
            height,
            masks,
            overlapping,
        })
    }

    /// A single mask covering the whole scene.
    pub fn uniform(width: usize, height: usize, class: SurfaceClass) -> Self {
        Self {
            width,
            height,
            masks: vec![(class, Grid::filled(width, height, true))],
            overlapping: false,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn is_overlapping(&self) -> bool {
        self.overlapping
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SurfaceClass, &Mask)> {
        self.masks.iter().map(|(c, m)| (c, m))
    }

    pub fn classes(&self) -> impl Iterator<Item = &SurfaceClass> {
        self.masks.iter().map(|(c, _)| c)
    }

    pub fn get(&self, class: &SurfaceClass) -> Option<&Mask> {
        self.masks.iter().find(|(c, _)| c == class).map(|(_, m)| m)
    }

    /// Index into [`Self::iter`] of the first mask containing `pixel`.
    pub fn slot_at(&self, pixel: usize) -> Option<usize> {
        self.masks.iter().position(|(_, m)| m.data()[pixel])
    }

    pub fn class_at(&self, pixel: usize) -> Option<&SurfaceClass> {
        self.slot_at(pixel).map(|s| &self.masks[s].0)
    }

    /// Per-pixel slot index, `None` where no mask applies.
    pub fn slot_grid(&self) -> Grid<Option<usize>> {
        Grid::from_fn(self.width, self.height, |x, y| self.slot_at(y * self.width + x))
    }

    pub fn is_covering(&self) -> bool {
        (0..self.width * self.height).all(|i| self.slot_at(i).is_some())
    }
}

/// Bandwidths used across the filters. Values are floored at
/// [`SIGMA_FLOOR`] on construction. The temporal-position bandwidth is
/// infinite and therefore not represented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSet {
    /// Spatial bandwidth in pixels.
    pub sigma_x: f64,
    /// Spectral bandwidth in sample units.
    pub sigma_s: f64,
    /// Temporal-spectral bandwidth in normalized reflectance units.
    pub sigma_ts: f64,
    /// Height bandwidth per class, meters.
    pub sigma_h: BTreeMap<SurfaceClass, f64>,
    pub window: usize,
}

impl BandwidthSet {
    pub fn new(
        sigma_x: f64,
        sigma_s: f64,
        sigma_ts: f64,
        sigma_h: BTreeMap<SurfaceClass, f64>,
        window: usize,
    ) -> Result<Self> {
        validate_window(window)?;
        for (name, v) in [("sigma_x", sigma_x), ("sigma_s", sigma_s), ("sigma_ts", sigma_ts)] {
            if !(v >= 0.0) {
                return Err(Error::param(name, format!("must be non-negative, got {v}")));
            }
        }
        Ok(Self {
            sigma_x: floor_sigma(sigma_x),
            sigma_s: floor_sigma(sigma_s),
            sigma_ts: floor_sigma(sigma_ts),
            sigma_h: sigma_h.into_iter().map(|(c, s)| (c, floor_sigma(s))).collect(),
            window,
        })
    }
}

pub fn validate_window(window: usize) -> Result<()> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::param("window", format!("must be odd and >= 1, got {window}")));
    }
    Ok(())
}

/// Co-registered single-band grids ordered by acquisition date.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalStack {
    grids: Vec<RasterGrid>,
    dates: Vec<NaiveDate>,
    band: String,
}

impl TemporalStack {
    pub fn new(grids: Vec<RasterGrid>, dates: Vec<NaiveDate>, band: impl Into<String>) -> Result<Self> {
        let report = validate_stack(&grids, &dates);
        if let Some(f) = report.findings.first() {
            return Err(Error::InvalidStack(f.to_string()));
        }
        Ok(Self {
            grids,
            dates,
            band: band.into(),
        })
    }

    /// Stack with synthetic consecutive daily dates starting 2000-01-01.
    pub fn with_daily_dates(grids: Vec<RasterGrid>, band: impl Into<String>) -> Result<Self> {
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        let dates = (0..grids.len())
            .map(|i| start + chrono::Duration::days(i as i64))
            .collect();
        Self::new(grids, dates, band)
    }

    pub fn grids(&self) -> &[RasterGrid] {
        &self.grids
    }

    pub fn grid(&self, t: usize) -> &RasterGrid {
        &self.grids[t]
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn band(&self) -> &str {
        &self.band
    }

    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.grids[0].dims()
    }

    pub fn width(&self) -> usize {
        self.grids[0].width()
    }

    pub fn height(&self) -> usize {
        self.grids[0].height()
    }

    /// Valid samples of one pixel across all dates.
    pub fn pixel_samples(&self, pixel: usize) -> Vec<f64> {
        self.grids
            .iter()
            .map(|g| g.data()[pixel])
            .filter(|v| !is_nodata(*v))
            .collect()
    }

    /// Returns a copy whose grids have been replaced, keeping dates and band.
    pub fn with_grids(&self, grids: Vec<RasterGrid>) -> Result<Self> {
        Self::new(grids, self.dates.clone(), self.band.clone())
    }

    pub fn into_grids(self) -> Vec<RasterGrid> {
        self.grids
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Finding {
    Empty,
    DateCountMismatch {
        grids: usize,
        dates: usize,
    },
    DimensionMismatch {
        index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    UnsortedDates {
        index: usize,
    },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::Empty => write!(f, "stack has no grids"),
            Finding::DateCountMismatch { grids, dates } => {
                write!(f, "{grids} grids but {dates} dates")
            }
            Finding::DimensionMismatch { index, expected, found } => {
                write!(f, "grid {index} is {found:?}, expected {expected:?}")
            }
            Finding::UnsortedDates { index } => {
                write!(f, "date {index} is not strictly after date {}", index - 1)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
    /// Nodata fraction of each grid, in stack order.
    pub nodata_fractions: Vec<f64>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Checks dimensions, date ordering, and nodata fractions without failing.
pub fn validate_stack(grids: &[RasterGrid], dates: &[NaiveDate]) -> ValidationReport {
    let mut report = ValidationReport::default();
    if grids.is_empty() {
        report.findings.push(Finding::Empty);
        return report;
    }
    if grids.len() != dates.len() {
        report.findings.push(Finding::DateCountMismatch {
            grids: grids.len(),
            dates: dates.len(),
        });
    }
    let expected = grids[0].dims();
    for (index, g) in grids.iter().enumerate().skip(1) {
        if g.dims() != expected {
            report.findings.push(Finding::DimensionMismatch {
                index,
                expected,
                found: g.dims(),
            });
        }
    }
    for index in 1..dates.len() {
        if dates[index] <= dates[index - 1] {
            report.findings.push(Finding::UnsortedDates { index });
        }
    }
    report.nodata_fractions = grids
        .iter()
        .map(|g| {
            if g.is_empty() {
                0.0
            } else {
                g.nodata_count() as f64 / g.len() as f64
            }
        })
        .collect();
    report
}

/// Bands of one multispectral image sequence sharing dates and dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiBandStack {
    bands: BTreeMap<String, TemporalStack>,
}

impl MultiBandStack {
    pub fn new(stacks: impl IntoIterator<Item = TemporalStack>) -> Result<Self> {
        let mut bands = BTreeMap::new();
        let mut first: Option<(Vec<NaiveDate>, (usize, usize))> = None;
        for s in stacks {
            match &first {
                None => first = Some((s.dates().to_vec(), s.dims())),
                Some((dates, dims)) => {
                    if s.dates() != dates.as_slice() {
                        return Err(Error::MismatchedDates);
                    }
                    if s.dims() != *dims {
                        return Err(Error::DimensionMismatch {
                            expected: *dims,
                            found: s.dims(),
                        });
                    }
                }
            }
            if bands.insert(s.band().to_string(), s).is_some() {
                return Err(Error::InvalidStack("duplicate band id".into()));
            }
        }
        if bands.is_empty() {
            return Err(Error::InvalidStack("no bands".into()));
        }
        Ok(Self { bands })
    }

    pub fn band(&self, id: &str) -> Option<&TemporalStack> {
        self.bands.get(id)
    }

    pub fn bands(&self) -> impl Iterator<Item = (&str, &TemporalStack)> {
        self.bands.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        self.bands.values().next().expect("non-empty").dates()
    }

    pub fn date_count(&self) -> usize {
        self.dates().len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.bands.values().next().expect("non-empty").dims()
    }

    /// The grids of every band at one date, in band-id order.
    pub fn date_slice(&self, t: usize) -> Vec<&RasterGrid> {
        self.bands.values().map(|s| s.grid(t)).collect()
    }
}

/// Population standard deviation; `None` for an empty slice.
pub fn population_std(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(var.sqrt())
}

/// Median with the even-count midpoint rule. Sorts `values` in place.
pub fn median_in_place(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(v: &[f64]) -> RasterGrid {
        RasterGrid::from_samples(v.len(), 1, v.to_vec()).unwrap()
    }

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, day).unwrap()
    }

    #[test]
    fn normalize_endpoints() {
        let n = normalize_unit(&grid(&[0.0, 127.5, 255.0])).unwrap();
        assert_eq!(n.grid.data(), &[0.0, 0.5, 1.0]);
        let n = normalize_unit(&grid(&[-3.0, 1.0, 7.0])).unwrap();
        assert_eq!(n.grid.data()[1], 0.4);
        assert_eq!((n.min, n.max), (-3.0, 7.0));
    }

    #[test]
    fn normalize_constant_and_empty() {
        let n = normalize_unit(&grid(&[5.0, 5.0, 5.0])).unwrap();
        assert!(n.constant);
        assert!(n.grid.data().iter().all(|v| *v == 0.0));
        assert!(matches!(
            normalize_unit(&grid(&[NODATA, NODATA])),
            Err(Error::AllNodata)
        ));
    }

    #[test]
    fn normalize_keeps_nodata() {
        let g = grid(&[1.0, NODATA, 3.0]);
        let n = normalize_unit(&g).unwrap();
        assert_eq!(n.grid.nodata_count(), 1);
        assert!(denormalize(&n.grid, n.min, n.max).nodata_eq(&g));
    }

    #[test]
    fn rejects_infinite_samples() {
        assert!(matches!(
            RasterGrid::from_samples(2, 1, vec![1.0, f64::INFINITY]),
            Err(Error::NonFiniteSample { index: 1 })
        ));
        assert!(RasterGrid::from_samples(2, 2, vec![1.0]).is_err());
    }

    #[test]
    fn validate_stack_findings() {
        let g8 = RasterGrid::filled(8, 8, 1.0);
        let g10 = RasterGrid::filled(10, 10, 1.0);
        let ok = validate_stack(&[g8.clone(), g8.clone(), g8.clone()], &[d(1), d(2), d(3)]);
        assert!(ok.is_clean());
        assert_eq!(ok.nodata_fractions, vec![0.0; 3]);

        let bad = validate_stack(&[g8.clone(), g10, g8.clone()], &[d(1), d(2), d(3)]);
        assert!(matches!(
            bad.findings[..],
            [Finding::DimensionMismatch { index: 1, .. }]
        ));

        let dup = validate_stack(&[g8.clone(), g8.clone()], &[d(1), d(1)]);
        assert_eq!(dup.findings, vec![Finding::UnsortedDates { index: 1 }]);
        assert!(TemporalStack::new(vec![g8.clone(), g8], vec![d(1), d(1)], "b").is_err());
    }

    #[test]
    fn nodata_fraction_reported() {
        let g = grid(&[1.0, NODATA, NODATA, 4.0]);
        let r = validate_stack(&[g], &[d(1)]);
        assert_eq!(r.nodata_fractions, vec![0.5]);
    }

    #[test]
    fn mask_set_disjointness() {
        let a = Grid::from_vec(2, 1, vec![true, false]).unwrap();
        let b = Grid::from_vec(2, 1, vec![true, true]).unwrap();
        assert!(matches!(
            ClassMaskSet::new(
                2,
                1,
                vec![(SurfaceClass::Tree, a.clone()), (SurfaceClass::Grass, b.clone())]
            ),
            Err(Error::OverlappingMasks(0))
        ));
        let set = ClassMaskSet::new_overlapping(2, 1, vec![(SurfaceClass::Tree, a), (SurfaceClass::Grass, b)]).unwrap();
        assert_eq!(set.class_at(0), Some(&SurfaceClass::Tree));
        assert_eq!(set.class_at(1), Some(&SurfaceClass::Grass));
        assert!(set.is_covering());
    }

    #[test]
    fn surface_class_names_round_trip() {
        for c in [
            SurfaceClass::Building,
            SurfaceClass::GroundRoad,
            SurfaceClass::Tree,
            SurfaceClass::Grass,
            SurfaceClass::Water,
            SurfaceClass::Custom("shelter".into()),
        ] {
            assert_eq!(c.as_str().parse::<SurfaceClass>().unwrap(), c);
        }
    }

    #[test]
    fn bandwidths_are_floored() {
        let b = BandwidthSet::new(0.0, 1.0, 0.0, BTreeMap::new(), 5).unwrap();
        assert_eq!(b.sigma_x, SIGMA_FLOOR);
        assert!(BandwidthSet::new(1.0, 1.0, 1.0, BTreeMap::new(), 4).is_err());
        assert!(BandwidthSet::new(-1.0, 1.0, 1.0, BTreeMap::new(), 3).is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median_in_place(&mut [1.0, 100.0, 2.0]), Some(2.0));
        assert_eq!(median_in_place(&mut [4.0, 8.0]), Some(6.0));
        assert_eq!(median_in_place(&mut []), None);
        assert_eq!(population_std(&[1.0, 3.0]), Some(1.0));
    }
}
