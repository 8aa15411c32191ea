use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{
    clipped_range, is_nodata, population_std, ClassMaskSet, Grid, Mask, RasterGrid, SurfaceClass, TemporalStack, NODATA,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopHatParams {
    /// Objects taller than this are clipped to it, meters.
    pub max_object_height: f64,
    /// Half-size of the square erosion element, pixels. Must exceed half
    /// the footprint of the widest above-ground object.
    pub opening_radius: usize,
}

impl Default for TopHatParams {
    fn default() -> Self {
        Self {
            max_object_height: 30.0,
            opening_radius: 25,
        }
    }
}

fn min_1d(src: &[f64], dst: &mut [f64], radius: usize) {
    let n = src.len();
    for (i, out) in dst.iter_mut().enumerate() {
        *out = clipped_range(i, radius, n)
            .map(|j| src[j])
            .filter(|v| !is_nodata(*v))
            .fold(f64::INFINITY, f64::min);
        if out.is_infinite() {
            *out = NODATA;
        }
    }
}

/// Grey erosion with a `(2r+1)²` square element, clipped at the border.
/// Nodata samples are ignored.
pub fn grey_erosion(grid: &RasterGrid, radius: usize) -> RasterGrid {
    let (w, h) = grid.dims();
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        min_1d(&grid.data()[y * w..(y + 1) * w], &mut rows[y * w..(y + 1) * w], radius);
    }
    let mut out = vec![0.0; w * h];
    let mut col = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = rows[y * w + x];
        }
        min_1d(&col, &mut col_out, radius);
        for y in 0..h {
            out[y * w + x] = col_out[y];
        }
    }
    RasterGrid::from_vec(w, h, out).expect("dims")
}

const FORWARD: [(i64, i64); 4] = [(-1, -1), (0, -1), (1, -1), (-1, 0)];
const BACKWARD: [(i64, i64); 4] = [(1, 1), (0, 1), (-1, 1), (1, 0)];

/// Grey reconstruction by dilation of `marker` under `mask`
/// (8-connectivity), using the raster / anti-raster / FIFO scheme.
/// Nodata in either grid acts as negative infinity and comes back as nodata.
pub fn reconstruct_by_dilation(marker: &RasterGrid, mask: &RasterGrid) -> Result<RasterGrid> {
    marker.ensure_dims(mask)?;
    let (w, h) = mask.dims();
    let lift = |v: f64| if is_nodata(v) { f64::NEG_INFINITY } else { v };
    let lim: Vec<f64> = mask.data().iter().map(|v| lift(*v)).collect();
    let mut j: Vec<f64> = marker.data().iter().zip(&lim).map(|(m, l)| lift(*m).min(*l)).collect();
    let at = |x: usize, y: usize, dx: i64, dy: i64| -> Option<usize> {
        let nx = x as i64 + dx;
        let ny = y as i64 + dy;
        (nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64).then(|| ny as usize * w + nx as usize)
    };

    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let m = FORWARD
                .iter()
                .filter_map(|&(dx, dy)| at(x, y, dx, dy))
                .fold(j[p], |acc, q| acc.max(j[q]));
            j[p] = m.min(lim[p]);
        }
    }
    let mut queue = VecDeque::new();
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let p = y * w + x;
            let m = BACKWARD
                .iter()
                .filter_map(|&(dx, dy)| at(x, y, dx, dy))
                .fold(j[p], |acc, q| acc.max(j[q]));
            j[p] = m.min(lim[p]);
            let needs_push = BACKWARD
                .iter()
                .filter_map(|&(dx, dy)| at(x, y, dx, dy))
                .any(|q| j[q] < j[p] && j[q] < lim[q]);
            if needs_push {
                queue.push_back(p);
            }
        }
    }
    while let Some(p) = queue.pop_front() {
        let (x, y) = (p % w, p / w);
        for dy in -1..=1 {
            for dx in -1..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                if let Some(q) = at(x, y, dx, dy) {
                    if j[q] < j[p] && lim[q] != j[q] {
                        j[q] = j[p].min(lim[q]);
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    let data = j
        .into_iter()
        .map(|v| if v.is_infinite() { NODATA } else { v })
        .collect();
    RasterGrid::from_vec(w, h, data)
}

/// Normalized DSM by morphological top-hat reconstruction.
///
/// The marker is the larger of a grey erosion of the DSM (which removes
/// objects narrower than the element) and the DSM lowered by
/// `max_object_height`; reconstructing it by dilation under the DSM
/// yields the ground surface. Objects taller than `max_object_height`
/// therefore report exactly that height.
pub fn ndsm_tophat(dsm: &RasterGrid, params: &TopHatParams) -> Result<RasterGrid> {
    if !(params.max_object_height > 0.0) {
        return Err(Error::param("max_object_height", "must be > 0"));
    }
    let eroded = grey_erosion(dsm, params.opening_radius);
    let marker = eroded.data().iter().zip(dsm.data()).map(|(e, d)| {
        if is_nodata(*d) {
            NODATA
        } else {
            let lowered = d - params.max_object_height;
            if is_nodata(*e) {
                lowered
            } else {
                e.max(lowered)
            }
        }
    });
    let marker = RasterGrid::from_vec(dsm.width(), dsm.height(), marker.collect())?;
    let ground = reconstruct_by_dilation(&marker, dsm)?;
    let data = dsm
        .data()
        .iter()
        .zip(ground.data())
        .map(|(d, g)| {
            if is_nodata(*d) || is_nodata(*g) {
                NODATA
            } else {
                (d - g).max(0.0)
            }
        })
        .collect();
    RasterGrid::from_vec(dsm.width(), dsm.height(), data)
}

/// `(nir - red) / (nir + red)`; a zero denominator gives nodata.
pub fn ndvi(nir: &RasterGrid, red: &RasterGrid) -> Result<RasterGrid> {
    nir.ensure_dims(red)?;
    let data = nir
        .data()
        .iter()
        .zip(red.data())
        .map(|(n, r)| {
            let den = n + r;
            if den == 0.0 || den.is_nan() {
                NODATA
            } else {
                (n - r) / den
            }
        })
        .collect();
    RasterGrid::from_vec(nir.width(), nir.height(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskThresholds {
    /// NDVI above this is vegetation.
    pub ndvi_veg: f64,
    /// Vegetation taller than this (nDSM, meters) is tree.
    pub h_tree: f64,
    /// Non-vegetation taller than this is building.
    pub h_building: f64,
}

impl Default for MaskThresholds {
    fn default() -> Self {
        Self {
            ndvi_veg: 0.3,
            h_tree: 2.0,
            h_building: 3.0,
        }
    }
}

/// Splits a scene into tree, grass, building, and ground/road masks.
/// The four masks are disjoint and cover every pixel; pixels with nodata
/// NDVI or nDSM fall into ground/road.
pub fn derive_class_masks(ndvi: &RasterGrid, ndsm: &RasterGrid, thresholds: &MaskThresholds) -> Result<ClassMaskSet> {
    ndvi.ensure_dims(ndsm)?;
    let (w, h) = ndvi.dims();
    let mut tree = Grid::filled(w, h, false);
    let mut grass = Grid::filled(w, h, false);
    let mut building = Grid::filled(w, h, false);
    let mut ground = Grid::filled(w, h, false);
    for i in 0..ndvi.len() {
        let (v, z) = (ndvi.data()[i], ndsm.data()[i]);
        let slot = if is_nodata(v) || is_nodata(z) {
            &mut ground
        } else if v > thresholds.ndvi_veg {
            if z > thresholds.h_tree {
                &mut tree
            } else {
                &mut grass
            }
        } else if z > thresholds.h_building {
            &mut building
        } else {
            &mut ground
        };
        slot.data_mut()[i] = true;
    }
    ClassMaskSet::new(
        w,
        h,
        vec![
            (SurfaceClass::Building, building),
            (SurfaceClass::GroundRoad, ground),
            (SurfaceClass::Tree, tree),
            (SurfaceClass::Grass, grass),
        ],
    )
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassUncertainty {
    /// Mean per-pixel temporal standard deviation per class, meters.
    pub per_class: BTreeMap<SurfaceClass, f64>,
    /// Classes whose mask selected no pixel with valid samples.
    pub empty: Vec<SurfaceClass>,
}

/// Mean temporal standard deviation of the DSM stack inside each mask.
pub fn class_uncertainty(stack: &TemporalStack, masks: &ClassMaskSet) -> Result<ClassUncertainty> {
    if stack.len() < 2 {
        return Err(Error::SingleDate);
    }
    if stack.dims() != masks.dims() {
        return Err(Error::DimensionMismatch {
            expected: stack.dims(),
            found: masks.dims(),
        });
    }
    let mut out = ClassUncertainty::default();
    for (class, mask) in masks.iter() {
        let stds: Vec<f64> = mask_pixels(mask)
            .filter_map(|i| population_std(&stack.pixel_samples(i)))
            .collect();
        if stds.is_empty() {
            log::warn!("class_uncertainty: mask `{class}` is empty");
            out.empty.push(class.clone());
        } else {
            out.per_class
                .insert(class.clone(), stds.iter().sum::<f64>() / stds.len() as f64);
        }
    }
    Ok(out)
}

fn mask_pixels(mask: &Mask) -> impl Iterator<Item = usize> + '_ {
    mask.data().iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ndvi_values() {
        let nir = RasterGrid::from_samples(4, 1, vec![0.5, 1.0, 0.6, 0.0]).unwrap();
        let red = RasterGrid::from_samples(4, 1, vec![0.5, 0.0, 0.2, 0.0]).unwrap();
        let v = ndvi(&nir, &red).unwrap();
        assert_eq!(v.data()[0], 0.0);
        assert_eq!(v.data()[1], 1.0);
        assert!((v.data()[2] - 0.5).abs() < 1e-12);
        assert!(v.data()[3].is_nan());
    }

    #[test]
    fn mask_rules() {
        let v = RasterGrid::from_samples(4, 1, vec![0.8, 0.1, 0.1, 0.8]).unwrap();
        let z = RasterGrid::from_samples(4, 1, vec![10.0, 12.0, 0.0, 0.5]).unwrap();
        let m = derive_class_masks(&v, &z, &MaskThresholds::default()).unwrap();
        assert_eq!(m.class_at(0), Some(&SurfaceClass::Tree));
        assert_eq!(m.class_at(1), Some(&SurfaceClass::Building));
        assert_eq!(m.class_at(2), Some(&SurfaceClass::GroundRoad));
        assert_eq!(m.class_at(3), Some(&SurfaceClass::Grass));
        assert!(m.is_covering());
    }

    #[test]
    fn flat_dsm_has_zero_ndsm() {
        let dsm = RasterGrid::filled(20, 20, 100.0);
        let n = ndsm_tophat(&dsm, &TopHatParams::default()).unwrap();
        assert!(n.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn uncertainty_of_two_point_series() {
        let a = RasterGrid::filled(3, 3, 5.0);
        let b = RasterGrid::filled(3, 3, 7.0);
        let s = TemporalStack::with_daily_dates(vec![a.clone(), b], "dsm").unwrap();
        let m = ClassMaskSet::uniform(3, 3, SurfaceClass::Building);
        let u = class_uncertainty(&s, &m).unwrap();
        assert_eq!(u.per_class[&SurfaceClass::Building], 1.0);
        let same = TemporalStack::with_daily_dates(vec![a.clone(), a], "dsm").unwrap();
        assert_eq!(
            class_uncertainty(&same, &m).unwrap().per_class[&SurfaceClass::Building],
            0.0
        );
    }
}
