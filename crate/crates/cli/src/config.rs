//! JSON run configuration. Every section is optional and falls back to
//! library defaults; unknown fields are rejected. Command-line flags win
//! over config values.

use std::path::Path;

use anyhow::Context;
use geofuse::fusion::{CoregParams, FusionBandwidths};
use geofuse::refine::RefineParams;
use geofuse::stereo::{LossWeights, SgmParams};
use geofuse::stfilter::StFilterParams;
use geofuse::synth::{ClassificationSpec, SceneSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub stfilter: StFilterParams,
    pub refine: RefineParams,
    pub fusion: FusionConfig,
    pub sgm: SgmConfig,
    pub eval: EvalConfig,
    pub scene: SceneSpec,
    pub classification: ClassificationSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub bandwidths: FusionBandwidths,
    /// Adaptive-median disk radius, pixels.
    pub radius: usize,
    /// k-median window, pixels.
    pub kmedian_window: usize,
    pub link_threshold: f64,
    pub sigma_w: f64,
    pub coreg: CoregParams,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            bandwidths: FusionBandwidths::default(),
            radius: 7,
            kmedian_window: 5,
            link_threshold: 10.0,
            sigma_w: 3.0,
            coreg: CoregParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgmConfig {
    /// Number of disparity levels, `0..dmax`.
    pub dmax: usize,
    pub census_window: usize,
    pub params: SgmParams,
    pub loss: LossWeights,
}

impl Default for SgmConfig {
    fn default() -> Self {
        Self {
            dmax: 64,
            census_window: 9,
            params: SgmParams::default(),
            loss: LossWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Use class-rate precision in prf1.
    pub normalized: bool,
    /// Height tolerance for completeness against ground truth, meters.
    pub tolerance: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            normalized: true,
            tolerance: None,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("config {}", path.display()))
    }
}
