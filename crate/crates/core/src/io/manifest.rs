//! JSON stack manifests.
//!
//! ```json
//! {
//!   "version": 1,
//!   "band": "dsm",
//!   "nodata": "nan",
//!   "entries": [{"path": "dsm_000.pfm", "date": "2020-01-01"}],
//!   "class_masks": {"building": "building.pgm"},
//!   "pixel_size": 0.5
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. `nodata` is
//! either `"nan"` or a sentinel number that is mapped to NaN on load.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{pfm, pgm, read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::raster::{ClassMaskSet, SurfaceClass, TemporalStack};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodataPolicy {
    Keyword(String),
    Sentinel(f64),
}

impl Default for NodataPolicy {
    fn default() -> Self {
        NodataPolicy::Keyword("nan".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub date: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackManifest {
    pub version: u32,
    pub band: String,
    #[serde(default)]
    pub nodata: NodataPolicy,
    pub entries: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub class_masks: BTreeMap<SurfaceClass, PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_size: Option<f64>,
}

fn bad(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Manifest {
        field: field.into(),
        reason: reason.into(),
    }
}

impl StackManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(bad("version", format!("unsupported version {}", self.version)));
        }
        if self.entries.is_empty() {
            return Err(bad("entries", "at least one entry is required"));
        }
        if let NodataPolicy::Keyword(k) = &self.nodata {
            if k != "nan" {
                return Err(bad("nodata", format!("unknown policy `{k}`")));
            }
        }
        if let Some(p) = self.pixel_size {
            if !(p.is_finite() && p > 0.0) {
                return Err(bad("pixel_size", "must be positive"));
            }
        }
        let dates = self.dates()?;
        if let Some(i) = dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(bad(
                format!("entries[{}].date", i + 1),
                "dates must be strictly increasing",
            ));
        }
        Ok(())
    }

    pub fn dates(&self) -> Result<Vec<NaiveDate>> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                NaiveDate::parse_from_str(&e.date, "%Y-%m-%d")
                    .map_err(|err| bad(format!("entries[{i}].date"), format!("`{}`: {err}", e.date)))
            })
            .collect()
    }
}

/// A stack and its optional class masks, read through a manifest.
#[derive(Debug, Clone)]
pub struct LoadedStack {
    pub manifest: StackManifest,
    pub stack: TemporalStack,
    pub masks: Option<ClassMaskSet>,
    /// Every file that was read, manifest first.
    pub inputs: Vec<PathBuf>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_stack(manifest_path: impl AsRef<Path>) -> Result<LoadedStack> {
    let manifest_path = manifest_path.as_ref();
    let text = String::from_utf8(read_bytes(manifest_path)?).map_err(|_| bad("manifest", "not valid UTF-8"))?;
    let manifest = StackManifest::parse(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut inputs = vec![manifest_path.to_path_buf()];
    let sentinel = match manifest.nodata {
        NodataPolicy::Sentinel(v) => Some(v),
        NodataPolicy::Keyword(_) => None,
    };
    let mut grids = Vec::with_capacity(manifest.entries.len());
    for (i, e) in manifest.entries.iter().enumerate() {
        let path = resolve(base, &e.path);
        if !path.is_file() {
            return Err(bad(
                format!("entries[{i}].path"),
                format!("{} not found", path.display()),
            ));
        }
        let mut g = pfm::read_pfm(&path)?;
        if let Some(s) = sentinel {
            for v in g.data_mut() {
                if *v == s {
                    *v = f64::NAN;
                }
            }
        }
        grids.push(g);
        inputs.push(path);
    }
    let stack = TemporalStack::new(grids, manifest.dates()?, manifest.band.clone())?;
    let masks = if manifest.class_masks.is_empty() {
        None
    } else {
        let (w, h) = stack.dims();
        let mut list = Vec::with_capacity(manifest.class_masks.len());
        for (class, p) in &manifest.class_masks {
            let path = resolve(base, p);
            if !path.is_file() {
                return Err(bad(
                    format!("class_masks.{class}"),
                    format!("{} not found", path.display()),
                ));
            }
            list.push((class.clone(), pgm::pgm_to_mask(&pgm::read_pgm(&path)?)));
            inputs.push(path);
        }
        Some(ClassMaskSet::new(w, h, list)?)
    };
    Ok(LoadedStack {
        manifest,
        stack,
        masks,
        inputs,
    })
}

/// Writes each date as `<prefix>_<t>.pfm` plus optional masks as
/// `<prefix>_<class>.pgm` into `dir`, then the manifest itself at
/// `<dir>/<prefix>.json`. Returns the manifest path.
pub fn write_stack(
    dir: impl AsRef<Path>,
    prefix: &str,
    stack: &TemporalStack,
    masks: Option<&ClassMaskSet>,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(stack.len());
    for (t, (g, d)) in stack.grids().iter().zip(stack.dates()).enumerate() {
        let name = format!("{prefix}_{t:03}.pfm");
        pfm::write_pfm(dir.join(&name), g)?;
        entries.push(ManifestEntry {
            path: name.into(),
            date: d.format("%Y-%m-%d").to_string(),
        });
    }
    let mut class_masks = BTreeMap::new();
    for (class, m) in masks.into_iter().flat_map(|m| m.iter()) {
        let name = format!("{prefix}_{class}.pgm");
        pgm::write_pgm(dir.join(&name), &pgm::mask_to_pgm(m))?;
        class_masks.insert(class.clone(), PathBuf::from(name));
    }
    let manifest = StackManifest {
        version: MANIFEST_VERSION,
        band: stack.band().to_string(),
        nodata: NodataPolicy::default(),
        entries,
        class_masks,
        pixel_size: None,
    };
    let path = dir.join(format!("{prefix}.json"));
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_bytes(&path, text.as_bytes())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_version_and_unsorted_dates() {
        let v2 = r#"{"version":2,"band":"dsm","entries":[{"path":"a.pfm","date":"2020-01-01"}]}"#;
        assert!(matches!(StackManifest::parse(v2), Err(Error::Manifest { field, .. }) if field == "version"));
        let unsorted = r#"{"version":1,"band":"dsm","entries":[
            {"path":"a.pfm","date":"2020-01-02"},{"path":"b.pfm","date":"2020-01-01"}]}"#;
        assert!(matches!(
            StackManifest::parse(unsorted),
            Err(Error::Manifest { field, .. }) if field == "entries[1].date"
        ));
    }

    #[test]
    fn unknown_field_rejected() {
        let extra = r#"{"version":1,"band":"dsm","entries":[],"bogus":1}"#;
        assert!(StackManifest::parse(extra).is_err());
    }
}
