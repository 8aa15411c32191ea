//! `geofuse` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error (bad flags, config, or parameter
//! values), 2 data error (unreadable or inconsistent inputs).

mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Marks an error as a usage error (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(
    name = "geofuse",
    version,
    about = "Spatiotemporal fusion toolkit for gridded remote-sensing data"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Stack manifest (JSON). Repeat for multi-band or multi-class inputs.
    #[arg(long, global = true)]
    pub manifest: Vec<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for synthetic scenes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spatiotemporal spectral filtering of one stack per band.
    Stfilter(StfilterArgs),
    /// Iterative refinement of per-class probability maps.
    ProbRefine(ProbRefineArgs),
    /// Fuse a temporal DSM stack into one DSM.
    DsmFuse(DsmFuseArgs),
    /// Census + semi-global matching on a rectified pair.
    Sgm(SgmArgs),
    /// Otsu change mask between two dates of a multi-band stack.
    ChangeDetect(ChangeArgs),
    /// Evaluate a result against ground truth; writes CSV.
    Eval(EvalArgs),
    /// Generate a synthetic scene.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct StfilterArgs {
    /// Spatial bandwidth, pixels.
    #[arg(long)]
    pub sigma_x: Option<f64>,
    /// Spectral bandwidth on the 0–1 scale.
    #[arg(long)]
    pub sigma_s: Option<f64>,
    /// Temporal-spectral bandwidth on the 0–1 scale; 0 gives a per-date bilateral filter.
    #[arg(long)]
    pub sigma_ts: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ProbRefineArgs {
    /// Red, green, and blue manifests (0–1 reflectance), in that order.
    #[arg(long, num_args = 3, required = true)]
    pub rgb: Vec<PathBuf>,
    /// nDSM stack manifest.
    #[arg(long)]
    pub ndsm: PathBuf,
    /// Height bandwidth for one class, `class=meters`. Repeatable.
    #[arg(long = "sigma-h", value_parser = parse_class_value)]
    pub sigma_h: Vec<(String, f64)>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub convergence: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
}

fn parse_class_value(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected class=value, got `{s}`"))?;
    let v: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.to_string(), v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Median,
    AdaptiveMedian,
    Kmedian,
    Waf,
    AdaptiveSt,
}

#[derive(Debug, Args)]
pub struct DsmFuseArgs {
    #[arg(long, value_enum)]
    pub algo: Algo,
    /// Orthophoto (PFM) for adaptive-st.
    #[arg(long)]
    pub ortho: Option<PathBuf>,
    /// Reference DSM for waf; defaults to the temporal median.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// adaptive-median neighbourhood radius, pixels.
    #[arg(long)]
    pub radius: Option<usize>,
    /// kmedian or adaptive-st window, odd pixels.
    #[arg(long)]
    pub window: Option<usize>,
    /// kmedian single-linkage gap, meters.
    #[arg(long)]
    pub link_threshold: Option<f64>,
    /// waf residual bandwidth, meters.
    #[arg(long)]
    pub sigma_w: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SgmArgs {
    #[arg(long)]
    pub left: PathBuf,
    #[arg(long)]
    pub right: PathBuf,
    /// Number of disparity levels searched.
    #[arg(long)]
    pub dmax: Option<usize>,
    #[arg(long)]
    pub census_window: Option<usize>,
    /// Penalty for a disparity step of one.
    #[arg(long)]
    pub p1: Option<f64>,
    /// Penalty for larger disparity jumps.
    #[arg(long)]
    pub p2: Option<f64>,
    /// Also write the energy map here.
    #[arg(long)]
    pub energy_out: Option<PathBuf>,
    /// Disparity prediction to score against the census disparity.
    #[arg(long)]
    pub pred: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChangeArgs {
    #[arg(long, default_value_t = 0)]
    pub date_a: usize,
    #[arg(long, default_value_t = 1)]
    pub date_b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Rmse,
    Prf1,
    R2,
    Accuracy,
    Completeness,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// Prediction: PFM for rmse/r2/completeness, PGM for prf1/accuracy.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// prf1: use raw-count precision instead of class-rate precision.
    #[arg(long)]
    pub raw: bool,
    /// completeness: count only pixels within this height of the ground truth.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SceneKind {
    Dsm,
    Spectral,
    Stereo,
    Classification,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SceneKind::Dsm)]
    pub kind: SceneKind,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub dates: Option<usize>,
    /// Fraction of probabilities to corrupt (classification scenes).
    #[arg(long, default_value_t = 0.0)]
    pub corrupt: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match e.downcast_ref::<geofuse::Error>() {
        Some(geofuse::Error::InvalidParameter { .. }) => 1,
        _ => 2,
    }
}
