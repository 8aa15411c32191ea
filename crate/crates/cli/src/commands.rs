use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use geofuse::fusion::{
    adaptive_median_fuse, adaptive_st_fuse, kmedian_cluster_fuse, median_fuse, weighted_average_fuse,
};
use geofuse::io::{self, LoadedStack};
use geofuse::metrics;
use geofuse::raster::{is_nodata, MultiBandStack, RasterGrid};
use geofuse::refine::{classify_argmax, refine_probabilities, rgb_to_cielab, ProbabilityStack};
use geofuse::stereo::{
    canny_edges_relative, census_cost_volume, confidence_masks, sgm_aggregate, weighted_target_loss,
};
use geofuse::stfilter::stfilter;
use geofuse::synth;
use serde::Serialize;

use crate::config::Config;
use crate::run::{self, RunManifest};
use crate::{usage, Algo, Cli, Command, Metric, SceneKind};

/// Canny thresholds as fractions of the largest gradient magnitude.
const CANNY_LOW: f64 = 0.1;
const CANNY_HIGH: f64 = 0.2;
const CANNY_SIGMA: f64 = 1.0;

struct Ctx<'a> {
    cli: &'a Cli,
    config: Config,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    params: serde_json::Value,
}

impl Ctx<'_> {
    fn out(&self) -> Result<PathBuf> {
        self.cli.common.out.clone().ok_or_else(|| usage("--out is required"))
    }

    fn manifests(&self, min: usize) -> Result<&[PathBuf]> {
        let m = &self.cli.common.manifest;
        if m.len() < min {
            return Err(usage(format!("--manifest is required (at least {min})")));
        }
        Ok(m)
    }

    fn load(&mut self, path: &Path) -> Result<LoadedStack> {
        let s = io::load_stack(path).with_context(|| format!("loading {}", path.display()))?;
        self.inputs.extend(s.inputs.iter().cloned());
        Ok(s)
    }

    fn read_pfm(&mut self, path: &Path) -> Result<RasterGrid> {
        let g = io::read_pfm(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(path.to_path_buf());
        Ok(g)
    }

    fn write_pfm(&mut self, path: &Path, grid: &RasterGrid) -> Result<()> {
        io::write_pfm(path, grid).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    fn set_params(&mut self, p: impl Serialize) -> Result<()> {
        self.params = serde_json::to_value(p)?;
        Ok(())
    }
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    let config = match &cli.common.config {
        Some(p) => Config::load(p).map_err(|e| usage(format!("{e:#}")))?,
        None => Config::default(),
    };
    let threads = cli.common.threads.or(config.threads);
    let pool = match threads {
        Some(0) => return Err(usage("--threads must be >= 1")),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?,
        None => rayon::ThreadPoolBuilder::new().build()?,
    };
    let mut ctx = Ctx {
        cli,
        config,
        inputs: Vec::new(),
        outputs: Vec::new(),
        params: serde_json::Value::Null,
    };
    let started = chrono::Utc::now().to_rfc3339();
    let name = pool.install(|| -> Result<&'static str> {
        Ok(match &cli.command {
            Command::Stfilter(a) => {
                stfilter_cmd(&mut ctx, a)?;
                "stfilter"
            }
            Command::ProbRefine(a) => {
                refine_cmd(&mut ctx, a)?;
                "prob-refine"
            }
            Command::DsmFuse(a) => {
                fuse_cmd(&mut ctx, a)?;
                "dsm-fuse"
            }
            Command::Sgm(a) => {
                sgm_cmd(&mut ctx, a)?;
                "sgm"
            }
            Command::ChangeDetect(a) => {
                change_cmd(&mut ctx, a)?;
                "change-detect"
            }
            Command::Eval(a) => {
                eval_cmd(&mut ctx, a)?;
                "eval"
            }
            Command::Synth(a) => {
                synth_cmd(&mut ctx, a)?;
                "synth"
            }
        })
    })?;
    if let Some(out) = &cli.common.out {
        run::write(
            out,
            &RunManifest {
                tool: "geofuse",
                version: env!("CARGO_PKG_VERSION"),
                command: name,
                started,
                threads: pool.current_num_threads(),
                inputs: ctx.inputs,
                outputs: ctx.outputs,
                parameters: ctx.params,
            },
        )?;
    }
    Ok(())
}

fn stfilter_cmd(ctx: &mut Ctx, a: &crate::StfilterArgs) -> Result<()> {
    let mut p = ctx.config.stfilter;
    p.sigma_x = a.sigma_x.unwrap_or(p.sigma_x);
    p.sigma_s = a.sigma_s.unwrap_or(p.sigma_s);
    p.sigma_ts = a.sigma_ts.unwrap_or(p.sigma_ts);
    p.window = a.window.unwrap_or(p.window);
    p.validate()?;
    let out = ctx.out()?;
    let paths = ctx.manifests(1)?.to_vec();
    let stacks = paths
        .iter()
        .map(|m| ctx.load(m).map(|s| s.stack))
        .collect::<Result<Vec<_>>>()?;
    let filtered = stfilter(&MultiBandStack::new(stacks)?, &p)?;
    for (band, stack) in filtered.bands() {
        let m = io::write_stack(&out, band, stack, None)?;
        ctx.outputs.push(m);
    }
    ctx.set_params(p)
}

fn refine_cmd(ctx: &mut Ctx, a: &crate::ProbRefineArgs) -> Result<()> {
    let mut p = ctx.config.refine.clone();
    for (k, v) in &a.sigma_h {
        p.sigma_h.insert(k.clone(), *v);
    }
    p.max_iter = a.max_iter.unwrap_or(p.max_iter);
    p.convergence = a.convergence.unwrap_or(p.convergence);
    p.window = a.window.unwrap_or(p.window);
    p.validate()?;
    let out = ctx.out()?;
    let paths = ctx.manifests(1)?.to_vec();
    let class_stacks = paths
        .iter()
        .map(|m| ctx.load(m).map(|s| s.stack))
        .collect::<Result<Vec<_>>>()?;
    let classes: Vec<String> = class_stacks.iter().map(|s| s.band().to_string()).collect();
    for c in &classes {
        if !p.sigma_h.contains_key(c) {
            return Err(usage(format!(
                "sigma_h: no bandwidth for class `{c}` (use --sigma-h {c}=METERS)"
            )));
        }
    }
    let dates = class_stacks[0].dates().to_vec();
    let probs = ProbabilityStack::new(
        classes.clone(),
        dates,
        class_stacks.into_iter().map(|s| s.into_grids()).collect(),
    )?;
    let rgb = a
        .rgb
        .iter()
        .map(|m| ctx.load(m).map(|s| s.stack))
        .collect::<Result<Vec<_>>>()?;
    let lab = (0..probs.date_count())
        .map(|t| {
            let g = |i: usize| rgb[i].grids().get(t).ok_or(geofuse::Error::MismatchedDates);
            Ok(rgb_to_cielab(g(0)?, g(1)?, g(2)?)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let ndsm = ctx.load(&a.ndsm)?.stack;
    let outcome = refine_probabilities(&probs, &lab, &ndsm, &p)?;
    log::info!("refinement stopped after {} iterations", outcome.iterations);
    for (c, name) in classes.iter().enumerate() {
        let stack = geofuse::TemporalStack::new(
            outcome.probs.class_maps(c).to_vec(),
            outcome.probs.dates().to_vec(),
            name.clone(),
        )?;
        ctx.outputs.push(io::write_stack(&out, name, &stack, None)?);
    }
    for t in 0..outcome.probs.date_count() {
        let path = out.join(format!("labels_{t:03}.pgm"));
        io::write_pgm(&path, &io::labels_to_pgm(&classify_argmax(&outcome.probs, t)?)?)?;
        ctx.outputs.push(path);
    }
    ctx.set_params(serde_json::json!({
        "refine": p,
        "iterations": outcome.iterations,
        "history": outcome.history,
    }))
}

fn fuse_cmd(ctx: &mut Ctx, a: &crate::DsmFuseArgs) -> Result<()> {
    let f = &ctx.config.fusion;
    let radius = a.radius.unwrap_or(f.radius);
    let window = a.window.unwrap_or(f.kmedian_window);
    let link = a.link_threshold.unwrap_or(f.link_threshold);
    let sigma_w = a.sigma_w.unwrap_or(f.sigma_w);
    let mut bw = f.bandwidths.clone();
    bw.window = a.window.unwrap_or(bw.window);
    let out = ctx.out()?;
    let m = ctx.manifests(1)?[0].clone();
    let loaded = ctx.load(&m)?;
    let stack = &loaded.stack;
    let need_masks = || {
        loaded
            .masks
            .clone()
            .ok_or_else(|| usage("this algorithm needs class_masks in the manifest"))
    };
    let (dsm, params) = match a.algo {
        Algo::Median => (median_fuse(stack), serde_json::json!({"algo": "median"})),
        Algo::AdaptiveMedian => {
            let fused = adaptive_median_fuse(stack, &need_masks()?, radius)?;
            (
                fused.dsm,
                serde_json::json!({"algo": "adaptive-median", "radius": radius}),
            )
        }
        Algo::Kmedian => (
            kmedian_cluster_fuse(stack, window, link)?,
            serde_json::json!({"algo": "kmedian", "window": window, "link_threshold": link}),
        ),
        Algo::Waf => {
            let reference = match &a.reference {
                Some(p) => Some(ctx.read_pfm(p)?),
                None => None,
            };
            let fused = weighted_average_fuse(stack, reference.as_ref(), sigma_w)?;
            (fused.dsm, serde_json::json!({"algo": "waf", "sigma_w": sigma_w}))
        }
        Algo::AdaptiveSt => {
            let ortho_path = a
                .ortho
                .clone()
                .ok_or_else(|| usage("--ortho is required for adaptive-st"))?;
            let ortho = ctx.read_pfm(&ortho_path)?;
            let fused = adaptive_st_fuse(stack, &ortho, &need_masks()?, &bw)?;
            (fused.dsm, serde_json::json!({"algo": "adaptive-st", "bandwidths": bw}))
        }
    };
    ctx.write_pfm(&out, &dsm)?;
    ctx.params = params;
    Ok(())
}

fn sgm_cmd(ctx: &mut Ctx, a: &crate::SgmArgs) -> Result<()> {
    let mut c = ctx.config.sgm.clone();
    c.dmax = a.dmax.unwrap_or(c.dmax);
    c.census_window = a.census_window.unwrap_or(c.census_window);
    c.params.p1 = a.p1.unwrap_or(c.params.p1);
    c.params.p2 = a.p2.unwrap_or(c.params.p2);
    let out = ctx.out()?;
    let left = ctx.read_pfm(&a.left)?;
    let right = ctx.read_pfm(&a.right)?;
    let cost = census_cost_volume(&left, &right, c.dmax, c.census_window)?;
    let res = sgm_aggregate(&cost, &c.params)?;
    ctx.write_pfm(&out, &res.disparity)?;
    if let Some(e) = &a.energy_out {
        ctx.write_pfm(e, &res.energy)?;
    }
    if let Some(pred_path) = &a.pred {
        let pred = ctx.read_pfm(pred_path)?;
        let edges = canny_edges_relative(&left, CANNY_LOW, CANNY_HIGH, CANNY_SIGMA)?;
        let masks = confidence_masks(&res.energy, &edges, c.loss.energy_threshold)?;
        let loss = weighted_target_loss(&pred, &res.disparity, &masks, &c.loss)?;
        let mut w = csv::Writer::from_writer(std::io::stdout());
        w.write_record(["metric", "value"])?;
        for (k, v) in [
            ("loss_total", loss.total),
            ("loss_all", loss.loss1),
            ("loss_energy", loss.loss2),
            ("loss_edge", loss.loss3),
        ] {
            w.write_record([k, &v.to_string()])?;
        }
        w.flush()?;
    }
    ctx.set_params(c)
}

fn change_cmd(ctx: &mut Ctx, a: &crate::ChangeArgs) -> Result<()> {
    let out = ctx.out()?;
    let paths = ctx.manifests(1)?.to_vec();
    let stacks = paths
        .iter()
        .map(|m| ctx.load(m).map(|s| s.stack))
        .collect::<Result<Vec<_>>>()?;
    let mask = metrics::change_mask(&MultiBandStack::new(stacks)?, a.date_a, a.date_b)?;
    io::write_pgm(&out, &io::mask_to_pgm(&mask))?;
    ctx.outputs.push(out);
    ctx.params = serde_json::json!({"date_a": a.date_a, "date_b": a.date_b});
    Ok(())
}

fn eval_cmd(ctx: &mut Ctx, a: &crate::EvalArgs) -> Result<()> {
    let gt_path = || a.gt.clone().ok_or_else(|| usage("--gt is required for this metric"));
    let read_pgm = |ctx: &mut Ctx, p: &Path| -> Result<io::PgmImage> {
        let img = io::read_pgm(p).with_context(|| format!("reading {}", p.display()))?;
        ctx.inputs.push(p.to_path_buf());
        Ok(img)
    };
    let normalized = !a.raw && ctx.config.eval.normalized;
    let mut parameters = String::new();
    let rows: Vec<(String, f64)> = match a.metric {
        Metric::Rmse => {
            let pred = ctx.read_pfm(&a.pred)?;
            let gt = ctx.read_pfm(&gt_path()?)?;
            vec![("rmse".into(), metrics::rmse(&pred, &gt)?)]
        }
        Metric::Completeness => {
            let pred = ctx.read_pfm(&a.pred)?;
            match a.tolerance.or(ctx.config.eval.tolerance) {
                Some(tol) => {
                    parameters = format!("tolerance={tol}");
                    let gt = ctx.read_pfm(&gt_path()?)?;
                    vec![(
                        "completeness_within".into(),
                        metrics::completeness_within(&pred, &gt, tol)?,
                    )]
                }
                None => vec![("completeness".into(), metrics::completeness(&pred))],
            }
        }
        Metric::Prf1 => {
            let pred = io::pgm_to_mask(&read_pgm(ctx, &a.pred)?);
            let gt = io::pgm_to_mask(&read_pgm(ctx, &gt_path()?)?);
            let r = metrics::prf1(&pred, &gt, normalized)?;
            parameters = format!("normalized={normalized}");
            vec![
                ("recall".into(), r.recall),
                ("precision".into(), r.precision),
                ("f1".into(), r.f1),
            ]
        }
        Metric::Accuracy => {
            let pred = io::pgm_to_labels(&read_pgm(ctx, &a.pred)?);
            let gt = io::pgm_to_labels(&read_pgm(ctx, &gt_path()?)?);
            let acc = metrics::accuracy(&pred, &gt, &[])?;
            std::iter::once(("overall".to_string(), acc.overall))
                .chain(acc.per_class.iter().map(|(c, v)| (format!("class_{c}"), *v)))
                .collect()
        }
        Metric::R2 => {
            let x = ctx.read_pfm(&a.pred)?;
            let y = ctx.read_pfm(&gt_path()?)?;
            x.ensure_dims(&y)?;
            let (xs, ys): (Vec<f64>, Vec<f64>) = x
                .data()
                .iter()
                .zip(y.data())
                .filter(|(a, b)| !is_nodata(**a) && !is_nodata(**b))
                .map(|(a, b)| (*a, *b))
                .unzip();
            parameters = format!("bisquare_c={}", metrics::BISQUARE_C);
            vec![
                ("robust_r2".into(), metrics::robust_r2(&xs, &ys)?),
                ("ols_r2".into(), metrics::ols_r2(&xs, &ys)?),
            ]
        }
    };
    let sink: Box<dyn std::io::Write> = match &ctx.cli.common.out {
        Some(p) => {
            ctx.outputs.push(p.clone());
            Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)
        }
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let mut inputs = format!("pred={}", a.pred.display());
    if let Some(gt) = &a.gt {
        inputs.push_str(&format!(";gt={}", gt.display()));
    }
    w.write_record(["metric", "value", "parameters", "inputs"])?;
    for (k, v) in &rows {
        w.write_record([k.as_str(), &format!("{v}"), &parameters, &inputs])?;
    }
    w.flush()?;
    ctx.params = serde_json::json!({"metric": format!("{:?}", a.metric).to_lowercase(), "normalized": normalized});
    Ok(())
}

fn synth_cmd(ctx: &mut Ctx, a: &crate::SynthArgs) -> Result<()> {
    let out = ctx.out()?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let seed = ctx.cli.common.seed.or(ctx.config.seed);
    match a.kind {
        SceneKind::Classification => {
            let mut spec = ctx.config.classification.clone();
            spec.width = a.width.unwrap_or(spec.width);
            spec.height = a.height.unwrap_or(spec.height);
            spec.dates = a.dates.unwrap_or(spec.dates);
            spec.seed = seed.unwrap_or(spec.seed);
            let scene = synth::synth_classification_scene(&spec)?;
            let (probs, _) = synth::corrupt_probabilities(&scene.probs, a.corrupt, spec.seed)?;
            for (c, name) in probs.classes().iter().enumerate() {
                let s =
                    geofuse::TemporalStack::new(probs.class_maps(c).to_vec(), probs.dates().to_vec(), name.clone())?;
                ctx.outputs.push(io::write_stack(&out, name, &s, None)?);
            }
            for (i, band) in ["red", "green", "blue"].iter().enumerate() {
                let grids = scene.rgb.iter().map(|d| d[i].clone()).collect();
                let s = geofuse::TemporalStack::new(grids, probs.dates().to_vec(), *band)?;
                ctx.outputs.push(io::write_stack(&out, band, &s, None)?);
            }
            ctx.outputs.push(io::write_stack(&out, "ndsm", &scene.ndsm, None)?);
            let labels = out.join("labels.pgm");
            io::write_pgm(&labels, &io::labels_to_pgm(&scene.labels)?)?;
            ctx.outputs.push(labels);
            ctx.set_params(serde_json::json!({"kind": "classification", "spec": spec, "corrupt": a.corrupt}))
        }
        kind => {
            let mut spec = ctx.config.scene.clone();
            spec.width = a.width.unwrap_or(spec.width);
            spec.height = a.height.unwrap_or(spec.height);
            spec.dates = a.dates.unwrap_or(spec.dates);
            spec.seed = seed.unwrap_or(spec.seed);
            match kind {
                SceneKind::Dsm => {
                    let s = synth::synth_dsm_scene(&spec)?;
                    ctx.outputs
                        .push(io::write_stack(&out, "dsm", &s.stack, Some(&s.masks))?);
                    ctx.write_pfm(&out.join("gt.pfm"), &s.gt)?;
                    ctx.write_pfm(&out.join("ortho.pfm"), &s.ortho)?;
                }
                SceneKind::Spectral => {
                    let s = synth::synth_spectral_stack(&spec)?;
                    for (band, stack) in s.stack.bands() {
                        ctx.outputs.push(io::write_stack(&out, band, stack, None)?);
                    }
                    let labels = out.join("labels.pgm");
                    io::write_pgm(&labels, &io::labels_to_pgm(&s.labels)?)?;
                    ctx.outputs.push(labels);
                }
                SceneKind::Stereo => {
                    let p = synth::synth_stereo_pair(&spec)?;
                    ctx.write_pfm(&out.join("left.pfm"), &p.left)?;
                    ctx.write_pfm(&out.join("right.pfm"), &p.right)?;
                    ctx.write_pfm(&out.join("disparity.pfm"), &p.disparity)?;
                }
                SceneKind::Classification => unreachable!(),
            }
            ctx.set_params(serde_json::json!({"kind": format!("{kind:?}").to_lowercase(), "spec": spec}))
        }
    }
}
