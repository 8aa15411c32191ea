//! Seeded synthetic scenes with known ground truth.
//!
//! Every scene element draws from its own ChaCha8 stream, derived from the
//! scene seed and a fixed stream number, so adding or resizing one element
//! leaves the others unchanged. Generation is single-threaded.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{
    is_nodata, ClassMaskSet, Grid, LabelGrid, Mask, MultiBandStack, RasterGrid, SurfaceClass, TemporalStack,
};
use crate::refine::{rgb_to_cielab, LabImage, ProbabilityStack};

mod stream {
    pub const BUILDINGS: u64 = 1;
    pub const TREES: u64 = 2;
    pub const GRASS: u64 = 3;
    pub const OUTLIERS: u64 = 4;
    pub const ORTHO: u64 = 5;
    pub const DRIFT: u64 = 6;
    pub const SPECTRAL: u64 = 7;
    pub const STEREO: u64 = 8;
    pub const CORRUPT: u64 = 9;
    pub const CLASSIF: u64 = 10;
    /// Per-class height noise uses `NOISE_BASE + class index`.
    pub const NOISE_BASE: u64 = 100;
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Classes produced by the scene generators, in label order.
pub const SCENE_CLASSES: [SurfaceClass; 4] = [
    SurfaceClass::Building,
    SurfaceClass::GroundRoad,
    SurfaceClass::Tree,
    SurfaceClass::Grass,
];

const BUILDING: u16 = 0;
const GROUND: u16 = 1;
const TREE: u16 = 2;
const GRASS: u16 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockSpec {
    pub count: usize,
    /// Side length range, pixels.
    pub size: [usize; 2],
    /// Height range above ground, meters.
    pub height: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlobSpec {
    pub count: usize,
    /// Radius range, pixels.
    pub radius: [f64; 2],
    /// Peak height range above ground, meters.
    pub height: [f64; 2],
}

impl Default for BlockSpec {
    fn default() -> Self {
        Self {
            count: 5,
            size: [8, 16],
            height: [6.0, 20.0],
        }
    }
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            count: 8,
            radius: [2.0, 5.0],
            height: [4.0, 12.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Drift {
    pub gain: f64,
    pub offset: f64,
}

/// Per-date radiometric drift. Dates listed in `per_date` (0-based) use
/// the given values; the rest draw gain and offset uniformly from the
/// ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSpec {
    pub gain: [f64; 2],
    pub offset: [f64; 2],
    pub per_date: BTreeMap<usize, Drift>,
}

impl Default for DriftSpec {
    fn default() -> Self {
        Self {
            gain: [1.0, 1.0],
            offset: [0.0, 0.0],
            per_date: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StereoSpec {
    /// Disparities run from 0 to `max_disparity` inclusive.
    pub max_disparity: usize,
    /// Same disparity everywhere when set.
    pub uniform_disparity: Option<usize>,
    /// Fronto-parallel boxes with larger disparity than the background.
    pub boxes: usize,
}

impl Default for StereoSpec {
    fn default() -> Self {
        Self {
            max_disparity: 5,
            uniform_disparity: None,
            boxes: 3,
        }
    }
}

/// Synthetic scene description; also the JSON config format of
/// `geofuse synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub ground_level: f64,
    pub buildings: BlockSpec,
    pub trees: BlobSpec,
    /// Grass patches; heights are ignored.
    pub grass: BlobSpec,
    /// Gaussian height noise σ per class, meters. Missing classes get none.
    pub noise: BTreeMap<SurfaceClass, f64>,
    pub outlier_fraction: f64,
    pub outlier_magnitude: f64,
    pub dates: usize,
    pub drift: DriftSpec,
    /// Per-date Gaussian noise on spectral bands.
    pub spectral_noise: f64,
    pub stereo: StereoSpec,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            seed: 0,
            ground_level: 100.0,
            buildings: BlockSpec::default(),
            trees: BlobSpec::default(),
            grass: BlobSpec {
                count: 4,
                radius: [4.0, 8.0],
                height: [0.0, 0.0],
            },
            noise: BTreeMap::new(),
            outlier_fraction: 0.0,
            outlier_magnitude: 20.0,
            dates: 5,
            drift: DriftSpec::default(),
            spectral_noise: 0.0,
            stereo: StereoSpec::default(),
        }
    }
}

fn check_range<T: PartialOrd + Copy>(name: &'static str, r: [T; 2]) -> Result<()> {
    if r[0] > r[1] {
        return Err(Error::param(name, "range minimum exceeds maximum"));
    }
    Ok(())
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::param("width", "scene must be non-empty"));
        }
        if self.dates == 0 {
            return Err(Error::param("dates", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return Err(Error::param("outlier_fraction", "must lie in [0, 1]"));
        }
        check_range("buildings.size", self.buildings.size)?;
        check_range("buildings.height", self.buildings.height)?;
        check_range("trees.radius", self.trees.radius)?;
        check_range("trees.height", self.trees.height)?;
        check_range("grass.radius", self.grass.radius)?;
        check_range("drift.gain", self.drift.gain)?;
        check_range("drift.offset", self.drift.offset)?;
        if self.buildings.size[0] == 0 {
            return Err(Error::param("buildings.size", "must be >= 1"));
        }
        if self.noise.values().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::param("noise", "σ must be finite and >= 0"));
        }
        if self.spectral_noise < 0.0 {
            return Err(Error::param("spectral_noise", "must be >= 0"));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Ground-truth layout shared by the DSM and spectral generators.
#[derive(Debug, Clone)]
struct Layout {
    labels: Grid<u16>,
    /// Height above ground.
    relief: RasterGrid,
}

fn layout(spec: &SceneSpec) -> Layout {
    let (w, h) = (spec.width, spec.height);
    let mut labels = Grid::filled(w, h, GROUND);
    let mut relief = RasterGrid::filled(w, h, 0.0);

    let mut rng = rng_for(spec.seed, stream::GRASS);
    for _ in 0..spec.grass.count {
        let (cx, cy) = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
        let r = uniform(&mut rng, spec.grass.radius);
        for_disc(w, h, cx, cy, r, |x, y, _| labels.set(x, y, GRASS));
    }

    let mut rng = rng_for(spec.seed, stream::TREES);
    for _ in 0..spec.trees.count {
        let (cx, cy) = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
        let r = uniform(&mut rng, spec.trees.radius);
        let peak = uniform(&mut rng, spec.trees.height);
        for_disc(w, h, cx, cy, r, |x, y, d| {
            let z = peak * (1.0 - (d / r).powi(2)).max(0.0).sqrt();
            if z > relief.get(x, y) || labels.get(x, y) != TREE {
                relief.set(x, y, z.max(relief.get(x, y)));
                labels.set(x, y, TREE);
            }
        });
    }

    let mut rng = rng_for(spec.seed, stream::BUILDINGS);
    let [smin, smax] = spec.buildings.size;
    for _ in 0..spec.buildings.count {
        let bw = rng.random_range(smin..=smax).min(w);
        let bh = rng.random_range(smin..=smax).min(h);
        let x0 = rng.random_range(0..=w - bw);
        let y0 = rng.random_range(0..=h - bh);
        let z = uniform(&mut rng, spec.buildings.height);
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                let prev = if labels.get(x, y) == BUILDING {
                    relief.get(x, y)
                } else {
                    0.0
                };
                relief.set(x, y, z.max(prev));
                labels.set(x, y, BUILDING);
            }
        }
    }
    Layout { labels, relief }
}

fn for_disc(w: usize, h: usize, cx: f64, cy: f64, r: f64, mut f: impl FnMut(usize, usize, f64)) {
    let x0 = (cx - r).floor().max(0.0) as usize;
    let y0 = (cy - r).floor().max(0.0) as usize;
    let x1 = ((cx + r).ceil() as usize).min(w - 1);
    let y1 = ((cy + r).ceil() as usize).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
            if d <= r {
                f(x, y, d);
            }
        }
    }
}

fn class_masks(labels: &Grid<u16>) -> Result<ClassMaskSet> {
    let (w, h) = labels.dims();
    let masks = SCENE_CLASSES
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), labels.map(|l| *l as usize == i)))
        .collect();
    ClassMaskSet::new(w, h, masks)
}

/// Output of [`synth_dsm_scene`].
#[derive(Debug, Clone)]
pub struct DsmScene {
    pub gt: RasterGrid,
    pub masks: ClassMaskSet,
    pub stack: TemporalStack,
    /// Grey orthophoto on a 0–255 scale, constant per class up to texture.
    pub ortho: RasterGrid,
    /// Per date, the pixels that received a gross outlier.
    pub outliers: Vec<Vec<usize>>,
}

/// Ground-truth DSM, disjoint covering class masks, and a temporal stack
/// of noisy observations. Each date adds class-dependent Gaussian noise
/// and, at exactly `⌊outlier_fraction·n⌋` uniformly chosen pixels, a gross
/// error of random sign and magnitude in `[0.5, 1.5]·outlier_magnitude`.
pub fn synth_dsm_scene(spec: &SceneSpec) -> Result<DsmScene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let n = w * h;
    let lay = layout(spec);
    let gt = lay.relief.map(|z| spec.ground_level + z);
    let masks = class_masks(&lay.labels)?;

    let mut grids: Vec<Vec<f64>> = vec![gt.data().to_vec(); spec.dates];
    for (ci, class) in SCENE_CLASSES.iter().enumerate() {
        let sigma = spec.noise.get(class).copied().unwrap_or(0.0);
        if sigma == 0.0 {
            continue;
        }
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::param("noise", e.to_string()))?;
        let mut rng = rng_for(spec.seed, stream::NOISE_BASE + ci as u64);
        for g in grids.iter_mut() {
            for (v, l) in g.iter_mut().zip(lay.labels.data()) {
                if *l as usize == ci {
                    *v += normal.sample(&mut rng);
                }
            }
        }
    }

    let k = (spec.outlier_fraction * n as f64).floor() as usize;
    let mut rng = rng_for(spec.seed, stream::OUTLIERS);
    let mut outliers = Vec::with_capacity(spec.dates);
    for g in grids.iter_mut() {
        let mut picked = index::sample(&mut rng, n, k.min(n)).into_vec();
        picked.sort_unstable();
        for &i in &picked {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            g[i] += sign * spec.outlier_magnitude * rng.random_range(0.5..1.5);
        }
        outliers.push(picked);
    }

    let grids = grids
        .into_iter()
        .map(|g| RasterGrid::from_samples(w, h, g))
        .collect::<Result<Vec<_>>>()?;
    let stack = TemporalStack::with_daily_dates(grids, "dsm")?;

    let mut rng = rng_for(spec.seed, stream::ORTHO);
    let tone = [200.0, 120.0, 60.0, 90.0];
    let ortho = RasterGrid::from_samples(
        w,
        h,
        lay.labels
            .data()
            .iter()
            .map(|l| tone[*l as usize] + rng.random_range(-5.0..5.0))
            .collect(),
    )?;
    Ok(DsmScene {
        gt,
        masks,
        stack,
        ortho,
        outliers,
    })
}

/// Reflectance per class for bands nir, red, green.
const REFLECTANCE: [[f64; 3]; 4] = [
    [0.30, 0.28, 0.26],
    [0.20, 0.18, 0.17],
    [0.55, 0.06, 0.10],
    [0.45, 0.09, 0.14],
];

pub const SPECTRAL_BANDS: [&str; 3] = ["nir", "red", "green"];

/// Output of [`synth_spectral_stack`].
#[derive(Debug, Clone)]
pub struct SpectralScene {
    pub stack: MultiBandStack,
    pub labels: LabelGrid,
    /// Drift applied to each date.
    pub drift: Vec<Drift>,
}

/// Multitemporal nir/red/green reflectance stack over the scene layout.
///
/// Date `t` holds `gain_t · base + offset_t` plus optional Gaussian noise,
/// where `base` is a fixed textured reflectance image.
pub fn synth_spectral_stack(spec: &SceneSpec) -> Result<SpectralScene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let lay = layout(spec);

    let mut rng = rng_for(spec.seed, stream::SPECTRAL);
    let base: Vec<Vec<f64>> = (0..3)
        .map(|b| {
            lay.labels
                .data()
                .iter()
                .map(|l| REFLECTANCE[*l as usize][b] * (1.0 + rng.random_range(-0.05..0.05)))
                .collect()
        })
        .collect();

    let mut rng = rng_for(spec.seed, stream::DRIFT);
    let drift: Vec<Drift> = (0..spec.dates)
        .map(|t| {
            let drawn = Drift {
                gain: uniform(&mut rng, spec.drift.gain),
                offset: uniform(&mut rng, spec.drift.offset),
            };
            spec.drift.per_date.get(&t).copied().unwrap_or(drawn)
        })
        .collect();

    let noise = if spec.spectral_noise > 0.0 {
        Some(Normal::new(0.0, spec.spectral_noise).map_err(|e| Error::param("spectral_noise", e.to_string()))?)
    } else {
        None
    };
    let mut nrng = rng_for(spec.seed, stream::SPECTRAL + 1000);
    let mut stacks = Vec::with_capacity(3);
    for (b, name) in SPECTRAL_BANDS.iter().enumerate() {
        let grids = drift
            .iter()
            .map(|d| {
                let v = base[b]
                    .iter()
                    .map(|r| d.gain * r + d.offset + noise.map_or(0.0, |n| n.sample(&mut nrng)))
                    .collect();
                RasterGrid::from_samples(w, h, v)
            })
            .collect::<Result<Vec<_>>>()?;
        stacks.push(TemporalStack::with_daily_dates(grids, *name)?);
    }
    Ok(SpectralScene {
        stack: MultiBandStack::new(stacks)?,
        labels: lay.labels.map(|l| Some(*l)),
        drift,
    })
}

/// Two-class probability scene for refinement experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassificationSpec {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub dates: usize,
    /// Building rectangles; everything else is ground.
    pub buildings: BlockSpec,
    /// Probability of the true class is drawn from this range.
    pub confidence: [f64; 2],
    /// Per-pixel colour noise σ on the 0–1 RGB scale.
    pub color_noise: f64,
    /// Per-pixel nDSM noise σ, meters.
    pub height_noise: f64,
}

impl Default for ClassificationSpec {
    fn default() -> Self {
        Self {
            width: 48,
            height: 48,
            seed: 0,
            dates: 3,
            buildings: BlockSpec {
                count: 4,
                size: [10, 18],
                height: [6.0, 15.0],
            },
            confidence: [0.6, 0.9],
            color_noise: 0.02,
            height_noise: 0.3,
        }
    }
}

/// Output of [`synth_classification_scene`].
#[derive(Debug, Clone)]
pub struct ClassificationScene {
    /// 0 = building, 1 = ground_road; the same on every date.
    pub labels: LabelGrid,
    pub probs: ProbabilityStack,
    /// Red, green, blue on the 0–1 scale for every date.
    pub rgb: Vec<[RasterGrid; 3]>,
    pub lab: Vec<LabImage>,
    pub ndsm: TemporalStack,
}

pub const CLASSIFICATION_CLASSES: [&str; 2] = ["building", "ground_road"];

/// Buildings on ground with per-date RGB, nDSM, and probability maps in
/// which the true class always holds the larger probability.
pub fn synth_classification_scene(spec: &ClassificationSpec) -> Result<ClassificationScene> {
    let (w, h) = (spec.width, spec.height);
    if w == 0 || h == 0 || spec.dates == 0 {
        return Err(Error::param("width", "scene and date count must be non-empty"));
    }
    check_range("confidence", spec.confidence)?;
    if !(spec.confidence[0] > 0.5 && spec.confidence[1] <= 1.0) {
        return Err(Error::param("confidence", "must lie in (0.5, 1]"));
    }
    let mut rng = rng_for(spec.seed, stream::CLASSIF);
    let mut is_bldg = Grid::filled(w, h, false);
    let mut height = RasterGrid::filled(w, h, 0.0);
    let [smin, smax] = spec.buildings.size;
    for _ in 0..spec.buildings.count {
        let bw = rng.random_range(smin..=smax).min(w);
        let bh = rng.random_range(smin..=smax).min(h);
        let x0 = rng.random_range(0..=w - bw);
        let y0 = rng.random_range(0..=h - bh);
        let z = uniform(&mut rng, spec.buildings.height);
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                is_bldg.set(x, y, true);
                height.set(x, y, z.max(height.get(x, y)));
            }
        }
    }
    let labels: LabelGrid = is_bldg.map(|b| Some(if *b { 0 } else { 1 }));
    let cn = Normal::new(0.0, spec.color_noise.max(0.0)).map_err(|e| Error::param("color_noise", e.to_string()))?;
    let hn = Normal::new(0.0, spec.height_noise.max(0.0)).map_err(|e| Error::param("height_noise", e.to_string()))?;

    let mut lab = Vec::with_capacity(spec.dates);
    let mut rgb = Vec::with_capacity(spec.dates);
    let mut ndsm = Vec::with_capacity(spec.dates);
    let mut p_bldg = Vec::with_capacity(spec.dates);
    let mut p_ground = Vec::with_capacity(spec.dates);
    for _ in 0..spec.dates {
        let mut chan = |roof: f64, ground: f64| -> Result<RasterGrid> {
            let v = is_bldg
                .data()
                .iter()
                .map(|b| ((if *b { roof } else { ground }) + cn.sample(&mut rng)).clamp(0.0, 1.0))
                .collect();
            RasterGrid::from_samples(w, h, v)
        };
        let r = chan(0.65, 0.45)?;
        let g = chan(0.30, 0.45)?;
        let b = chan(0.25, 0.42)?;
        lab.push(rgb_to_cielab(&r, &g, &b)?);
        rgb.push([r, g, b]);
        ndsm.push(RasterGrid::from_samples(
            w,
            h,
            height.data().iter().map(|z| z + hn.sample(&mut rng)).collect(),
        )?);
        let p_true: Vec<f64> = (0..w * h).map(|_| uniform(&mut rng, spec.confidence)).collect();
        let pb = is_bldg
            .data()
            .iter()
            .zip(&p_true)
            .map(|(b, p)| if *b { *p } else { 1.0 - p })
            .collect::<Vec<_>>();
        p_ground.push(RasterGrid::from_samples(w, h, pb.iter().map(|p| 1.0 - p).collect())?);
        p_bldg.push(RasterGrid::from_samples(w, h, pb)?);
    }
    let ndsm = TemporalStack::with_daily_dates(ndsm, "ndsm")?;
    let probs = ProbabilityStack::new(
        CLASSIFICATION_CLASSES.iter().map(|s| s.to_string()).collect(),
        ndsm.dates().to_vec(),
        vec![p_bldg, p_ground],
    )?;
    Ok(ClassificationScene {
        labels,
        probs,
        rgb,
        lab,
        ndsm,
    })
}

/// Swaps the top class with a random other class at exactly
/// `⌊fraction·n⌋` pixels per date. Returns the corrupted stack and the
/// sorted pixel indices touched on each date.
#[allow(clippy::needless_range_loop)]
pub fn corrupt_probabilities(
    probs: &ProbabilityStack,
    fraction: f64,
    seed: u64,
) -> Result<(ProbabilityStack, Vec<Vec<usize>>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::param("fraction", "must lie in [0, 1]"));
    }
    let (w, h) = probs.dims();
    let n = w * h;
    let classes = probs.class_count();
    let k = (fraction * n as f64).floor() as usize;
    let mut maps = probs.clone().into_maps();
    let mut rng = rng_for(seed, stream::CORRUPT);
    let mut touched = Vec::with_capacity(probs.date_count());
    for t in 0..probs.date_count() {
        let mut picked = index::sample(&mut rng, n, k.min(n)).into_vec();
        picked.sort_unstable();
        if classes < 2 {
            touched.push(picked);
            continue;
        }
        for &i in &picked {
            let mut top = 0;
            for c in 1..classes {
                let v = maps[c][t].data()[i];
                let best = maps[top][t].data()[i];
                if !is_nodata(v) && (is_nodata(best) || v > best) {
                    top = c;
                }
            }
            let mut other = rng.random_range(0..classes - 1);
            if other >= top {
                other += 1;
            }
            let a = maps[top][t].data()[i];
            let b = maps[other][t].data()[i];
            maps[top][t].data_mut()[i] = b;
            maps[other][t].data_mut()[i] = a;
        }
        touched.push(picked);
    }
    let out = ProbabilityStack::new(probs.classes().to_vec(), probs.dates().to_vec(), maps)?;
    Ok((out, touched))
}

/// Output of [`synth_stereo_pair`].
#[derive(Debug, Clone)]
pub struct StereoPair {
    pub left: RasterGrid,
    pub right: RasterGrid,
    /// Left-image disparity; nodata where the pixel is occluded in the
    /// right image or falls outside it.
    pub disparity: RasterGrid,
}

/// Rectified pair with integer disparity such that
/// `right(x − d(x), y) = left(x, y)` for every visible left pixel. When
/// several left pixels land on one right pixel the largest disparity
/// wins. Right pixels nothing lands on get fresh texture.
pub fn synth_stereo_pair(spec: &SceneSpec) -> Result<StereoPair> {
    let (w, h) = (spec.width, spec.height);
    let st = &spec.stereo;
    let dmax = st.uniform_disparity.unwrap_or(st.max_disparity).max(st.max_disparity);
    if w == 0 || h == 0 {
        return Err(Error::param("width", "scene must be non-empty"));
    }
    if 4 * dmax >= w {
        return Err(Error::param("stereo.max_disparity", "must be below width / 4"));
    }
    let mut rng = rng_for(spec.seed, stream::STEREO);
    let left = RasterGrid::from_samples(w, h, (0..w * h).map(|_| rng.random_range(0.0..255.0)).collect())?;

    let disp: Grid<usize> = match st.uniform_disparity {
        Some(d) => Grid::filled(w, h, d),
        None => {
            let bg = st.max_disparity / 3;
            let mut g = Grid::filled(w, h, bg);
            for _ in 0..st.boxes {
                let bw = rng.random_range(w / 8..=w / 3).max(1);
                let bh = rng.random_range(h / 8..=h / 3).max(1);
                let x0 = rng.random_range(0..=w - bw.min(w));
                let y0 = rng.random_range(0..=h - bh.min(h));
                let d = rng.random_range(bg..=st.max_disparity);
                for y in y0..(y0 + bh).min(h) {
                    for x in x0..(x0 + bw).min(w) {
                        g.set(x, y, d.max(g.get(x, y)));
                    }
                }
            }
            g
        }
    };

    let mut right = vec![f64::NAN; w * h];
    let mut zbuf: Vec<Option<usize>> = vec![None; w * h];
    for y in 0..h {
        for x in 0..w {
            let d = disp.get(x, y);
            if d > x {
                continue;
            }
            let r = y * w + x - d;
            if zbuf[r].is_none_or(|prev| d > prev) {
                zbuf[r] = Some(d);
                right[r] = left.get(x, y);
            }
        }
    }
    for v in right.iter_mut().filter(|v| v.is_nan()) {
        *v = rng.random_range(0.0..255.0);
    }
    let mut gt = RasterGrid::nodata(w, h);
    for y in 0..h {
        for x in 0..w {
            let d = disp.get(x, y);
            if d <= x && zbuf[y * w + x - d] == Some(d) {
                gt.set(x, y, d as f64);
            }
        }
    }
    Ok(StereoPair {
        left,
        right: RasterGrid::from_samples(w, h, right)?,
        disparity: gt,
    })
}

/// Mask of pixels whose label equals `class`.
pub fn label_mask(labels: &LabelGrid, class: u16) -> Mask {
    labels.map(|l| *l == Some(class))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::validate_stack;

    #[test]
    fn zero_noise_dates_equal_gt() {
        let s = synth_dsm_scene(&SceneSpec::default()).unwrap();
        for g in s.stack.grids() {
            assert_eq!(g, &s.gt);
        }
        assert!(s.masks.is_covering());
        assert!(validate_stack(s.stack.grids(), s.stack.dates()).is_clean());
    }

    #[test]
    fn same_seed_same_scene() {
        let mut spec = SceneSpec::default();
        spec.noise.insert(SurfaceClass::Tree, 4.0);
        spec.outlier_fraction = 0.05;
        let a = synth_dsm_scene(&spec).unwrap();
        let b = synth_dsm_scene(&spec).unwrap();
        assert_eq!(a.stack, b.stack);
        assert_eq!(a.outliers, b.outliers);
        assert_eq!(a.outliers[0].len(), (0.05 * 64.0 * 64.0) as usize);
    }

    #[test]
    fn noise_streams_are_independent() {
        let mut spec = SceneSpec::default();
        spec.noise.insert(SurfaceClass::Building, 2.0);
        let a = synth_dsm_scene(&spec).unwrap();
        spec.noise.insert(SurfaceClass::Tree, 4.0);
        let b = synth_dsm_scene(&spec).unwrap();
        let bm = a.masks.get(&SurfaceClass::Building).unwrap();
        for (ga, gb) in a.stack.grids().iter().zip(b.stack.grids()) {
            for i in 0..ga.len() {
                if bm.data()[i] {
                    assert_eq!(ga.data()[i], gb.data()[i]);
                }
            }
        }
    }

    #[test]
    fn explicit_gain_scales_date() {
        let mut spec = SceneSpec {
            dates: 2,
            ..Default::default()
        };
        spec.drift.per_date.insert(1, Drift { gain: 1.2, offset: 0.0 });
        let s = synth_spectral_stack(&spec).unwrap();
        for (_, band) in s.stack.bands() {
            for (a, b) in band.grid(0).data().iter().zip(band.grid(1).data()) {
                assert_eq!(*b, 1.2 * a);
            }
        }
    }

    #[test]
    fn corruption_counts() {
        let scene = synth_classification_scene(&ClassificationSpec::default()).unwrap();
        let (same, none) = corrupt_probabilities(&scene.probs, 0.0, 3).unwrap();
        assert_eq!(same, scene.probs);
        assert!(none.iter().all(Vec::is_empty));
        let (_, some) = corrupt_probabilities(&scene.probs, 0.1, 3).unwrap();
        assert!(some.iter().all(|v| v.len() == 230));
    }

    #[test]
    fn stereo_zero_disparity_identical() {
        let mut spec = SceneSpec::default();
        spec.stereo.uniform_disparity = Some(0);
        spec.stereo.max_disparity = 0;
        let p = synth_stereo_pair(&spec).unwrap();
        assert_eq!(p.left, p.right);
        assert_eq!(p.disparity.valid_count(), p.disparity.len());
    }

    #[test]
    fn stereo_uniform_warp() {
        let mut spec = SceneSpec::default();
        spec.stereo.uniform_disparity = Some(3);
        let p = synth_stereo_pair(&spec).unwrap();
        for y in 0..spec.height {
            for x in 3..spec.width {
                assert_eq!(p.right.get(x - 3, y), p.left.get(x, y));
                assert_eq!(p.disparity.get(x, y), 3.0);
            }
            assert!(p.disparity.get(0, y).is_nan());
        }
    }
}
