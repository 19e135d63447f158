//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use zp3_core::diffusion::{sample_latent, schedule_weights};
use zp3_core::eval::{evaluate_named, EvalOptions, MetricReport};
use zp3_core::priors::TargetView;
use zp3_core::reconstruct::{
    coarse_fit_report, init_cloud, load_checkpoint, refine_with, save_checkpoint, sidecar_path, CheckpointMeta,
    FitConfig, MetricRecord, RefineRun, Supervision,
};
use zp3_core::splat::{render_with, GaussianCloud};
use zp3_core::synth::{toy_scene, ToyParams};
use zp3_core::views::{camera_from_spec, PoseEntry, PoseFile, RotationPlan, ViewSpec};

use crate::args::{ConfigArgs, EvalArgs, InitArgs, RefineArgs, RenderArgs, SampleArgs, SynthArgs};
use crate::config::RunConfig;
use crate::dataset::{Dataset, DatasetMeta, DatasetView};
use crate::error::{CliError, CliResult, EXIT_BRIDGE, EXIT_OPTIMIZATION};
use crate::pipeline::{build_priors, connect_bridge, mean, training_psnr, OutputLock};
use crate::png;

fn config_json(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn load_ckpt(path: &Path) -> CliResult<(GaussianCloud, Option<CheckpointMeta>)> {
    load_checkpoint(path).map_err(|e| CliError::usage(format!("checkpoint {}: {e}", path.display())))
}

pub fn init(a: &InitArgs) -> CliResult<()> {
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(p) = a.points {
        cfg.init.points = p;
    }
    if let Some(s) = a.steps {
        cfg.init.steps = s;
    }
    cfg.validate()?;
    let dataset = Dataset::load(&a.dataset)?;
    let _lock = OutputLock::for_file(&a.out)?;
    let obs = dataset.observations();

    let seeds = init_cloud(&obs, cfg.init.points, cfg.seed)?;
    let fit = FitConfig { seed: cfg.seed, ..cfg.init.fit.clone() };
    eprintln!("fitting {} gaussians to {} views for {} steps", seeds.len(), obs.len(), cfg.init.steps);
    let report = coarse_fit_report(&seeds, &obs, cfg.init.steps, &fit)?;
    let psnrs = training_psnr(&report.cloud, &obs, &fit.render, fit.background)?;
    let window = report.losses.len().min(50);
    let metrics = BTreeMap::from([
        ("loss_start".to_string(), mean(&report.losses[..window])),
        ("loss_end".to_string(), mean(&report.losses[report.losses.len() - window..])),
        ("train_psnr".to_string(), mean(&psnrs)),
    ]);
    let meta = CheckpointMeta {
        config: config_json(&cfg),
        seed: cfg.seed,
        batch: None,
        history: vec![MetricRecord { batch: None, gaussians: report.cloud.len(), metrics }],
    };
    save_checkpoint(&a.out, &report.cloud, &meta)?;
    println!("masked training PSNR: {:.2} dB", mean(&psnrs));
    println!("wrote {} ({} gaussians)", a.out.display(), report.cloud.len());
    Ok(())
}

#[derive(Serialize)]
struct WeightPair {
    t: usize,
    w_lf: f64,
    w_hf: f64,
}

#[derive(Serialize)]
struct SampleSidecar {
    azimuth: f64,
    elevation: f64,
    seed: u64,
    steps: usize,
    weights: Vec<WeightPair>,
}

fn target_for(dataset: &Dataset, id: &str, spec: ViewSpec) -> CliResult<TargetView> {
    let first = &dataset.views[0].observation;
    Ok(TargetView::from_spec(id, spec, first.camera.fx, first.width(), first.height())?)
}

pub fn sample(a: &SampleArgs) -> CliResult<()> {
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let (cloud, _) = load_ckpt(&a.checkpoint)?;
    let dataset = Dataset::load(&a.dataset)?;
    let _lock = OutputLock::for_file(&a.out)?;
    let bridge = connect_bridge(&cfg)?;
    let mut bundle = build_priors(&cfg, &dataset, &bridge)?;
    if cfg.priors.lf {
        bundle = bundle.with_lf_cloud(Arc::new(cloud));
    }
    let spec = ViewSpec::new(a.view.0, a.view.1, cfg.plan.radius, cfg.plan.target)?;
    let target = target_for(&dataset, "sample", spec)?;
    let sched = cfg.schedule()?;
    let refine = cfg.refine_config(RotationPlan::empty())?;
    let (latent, _) = sample_latent(&target, &bundle, &sched, &cfg.fusion, cfg.seed, &refine.sample)?;
    png::write_rgb(&a.out, &latent.to_pixel().clamped(0.0, 1.0))?;

    let steps = sched.steps();
    let lf_on = bundle.lf.is_some() && !refine.sample.disable_lf;
    let weights = (0..steps)
        .map(|t| {
            let t_w = if refine.sample.invert_t { steps - 1 - t } else { t };
            let (w_lf, w_hf) = schedule_weights(t_w as f64, &cfg.fusion);
            WeightPair { t, w_lf: if lf_on { w_lf } else { 0.0 }, w_hf }
        })
        .collect();
    let side = SampleSidecar { azimuth: spec.azimuth, elevation: spec.elevation, seed: cfg.seed, steps, weights };
    std::fs::write(a.out.with_extension("json"), serde_json::to_string_pretty(&side)? + "\n")?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn batch_path(dir: &Path, b: usize) -> PathBuf {
    dir.join(format!("batch_{b:02}.zp3g"))
}

fn write_supervision(dir: &Path, b: usize, views: &[Supervision]) -> CliResult<()> {
    let sub = dir.join("supervision").join(format!("b{b:02}"));
    std::fs::create_dir_all(&sub)?;
    let mut poses = PoseFile::default();
    for s in views {
        let file = format!("{}.png", s.id);
        png::write_rgb(&sub.join(&file), &s.image)?;
        poses.views.push(PoseEntry::from_camera(file, &s.camera));
    }
    poses.save(&sub.join("poses.json"))?;
    Ok(())
}

fn read_supervision(dir: &Path, b: usize, target: [f64; 3]) -> CliResult<Vec<Supervision>> {
    let sub = dir.join("supervision").join(format!("b{b:02}"));
    let poses = PoseFile::load(&sub.join("poses.json"))?;
    poses
        .views
        .iter()
        .map(|p| {
            let camera = p.camera()?;
            Ok(Supervision {
                id: p.file.trim_end_matches(".png").to_string(),
                spec: ViewSpec::from_camera(&camera, target)?,
                camera,
                image: png::read_rgb(&sub.join(&p.file))?,
            })
        })
        .collect()
}

fn last_completed(dir: &Path, plan_len: usize) -> Option<usize> {
    (0..plan_len).rev().find(|&b| batch_path(dir, b).exists() && sidecar_path(&batch_path(dir, b)).exists())
}

fn region_summary(report: &MetricReport) -> String {
    format!("visible {:.2} dB, invisible {:.2} dB", report.visible.psnr, report.invisible.psnr)
}

fn eval_dataset(cloud: &GaussianCloud, data: &Dataset, opts: &EvalOptions) -> CliResult<MetricReport> {
    let named: Vec<(String, &_)> = data.views.iter().map(|v| (v.stem.clone(), &v.observation)).collect();
    Ok(evaluate_named(cloud, &named, data.meta.observed_range, opts, None)?)
}

pub fn refine(a: &RefineArgs) -> CliResult<()> {
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.retain_supervision {
        cfg.refine.retain_supervision = true;
    }
    cfg.validate()?;
    let plan = cfg.rotation_plan()?;
    let dataset = Dataset::load(&a.dataset)?;
    let ground_truth = a.eval.as_deref().map(Dataset::load).transpose()?;
    let _lock = OutputLock::acquire(&a.out)?;
    let final_path = a.out.join("final.zp3g");

    if plan.is_empty() {
        std::fs::copy(&a.checkpoint, &final_path)
            .map_err(|e| CliError::usage(format!("checkpoint {}: {e}", a.checkpoint.display())))?;
        if sidecar_path(&a.checkpoint).exists() {
            std::fs::copy(sidecar_path(&a.checkpoint), sidecar_path(&final_path))?;
        }
        println!("empty plan; copied {} to {}", a.checkpoint.display(), final_path.display());
        return Ok(());
    }

    let (coarse, coarse_meta) = load_ckpt(&a.checkpoint)?;
    let mut history = coarse_meta.map(|m| m.history).unwrap_or_default();
    let mut current = coarse.clone();
    let mut start = 0;
    let mut retained = Vec::new();
    if a.resume {
        if let Some(b) = last_completed(&a.out, plan.len()) {
            let (cloud, meta) = load_ckpt(&batch_path(&a.out, b))?;
            current = cloud;
            history = meta.map(|m| m.history).unwrap_or_default();
            start = b + 1;
            if cfg.refine.retain_supervision {
                for k in 0..=b {
                    retained.extend(read_supervision(&a.out, k, cfg.plan.target)?);
                }
            }
            eprintln!("resuming after batch {b}");
        }
    }

    let obs = dataset.observations();
    let bridge = connect_bridge(&cfg)?;
    let priors = build_priors(&cfg, &dataset, &bridge)?;
    let refine_cfg = cfg.refine_config(plan.clone())?;
    let mut last_error = None;
    for b in start..plan.len() {
        let mut supervision = Vec::new();
        let mut loss = f64::NAN;
        let mut observer = |o: &zp3_core::reconstruct::BatchOutcome| {
            supervision = o.supervision.to_vec();
            loss = o.mean_loss;
            Ok(())
        };
        let mut single = refine_cfg.clone();
        single.plan.batches.truncate(b + 1);
        let run = RefineRun {
            start_batch: b,
            retained: retained.clone(),
            bridge: bridge.clone(),
            observer: Some(&mut observer),
        };
        match refine_with(&current, &obs, &single, &priors, cfg.seed, run) {
            Ok(next) => {
                last_error = None;
                if cfg.refine.retain_supervision {
                    retained.extend(supervision.iter().cloned());
                }
                write_supervision(&a.out, b, &supervision)?;
                let psnrs = training_psnr(&next, &obs, &refine_cfg.render, refine_cfg.background)?;
                history.push(MetricRecord {
                    batch: Some(b),
                    gaussians: next.len(),
                    metrics: BTreeMap::from([("loss".to_string(), loss), ("train_psnr".to_string(), mean(&psnrs))]),
                });
                let meta = CheckpointMeta { config: config_json(&cfg), seed: cfg.seed, batch: Some(b), history: history.clone() };
                save_checkpoint(&batch_path(&a.out, b), &next, &meta)?;
                eprintln!("batch {b}: loss {loss:.5}, training PSNR {:.2} dB, {} gaussians", mean(&psnrs), next.len());
                current = next;
            }
            Err(e) => {
                eprintln!("batch {b} failed: {e}");
                last_error = Some(e);
            }
        }
    }
    if let Some(e) = last_error {
        let code = if e.is_bridge() { EXIT_BRIDGE } else { EXIT_OPTIMIZATION };
        return Err(CliError { code, message: format!("final batch failed: {e}") });
    }

    let meta = CheckpointMeta {
        config: config_json(&cfg),
        seed: cfg.seed,
        batch: Some(plan.len() - 1),
        history: history.clone(),
    };
    save_checkpoint(&final_path, &current, &meta)?;
    std::fs::write(a.out.join("history.json"), serde_json::to_string_pretty(&history)? + "\n")?;
    if let Some(gt) = &ground_truth {
        let before = eval_dataset(&coarse, gt, &cfg.eval)?;
        let after = eval_dataset(&current, gt, &cfg.eval)?;
        println!("coarse:  {}", region_summary(&before));
        println!("refined: {}", region_summary(&after));
    }
    println!("wrote {}", final_path.display());
    Ok(())
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    let cfg = RunConfig::load_or_default(a.config.as_deref())?;
    let (cloud, _) = load_ckpt(&a.checkpoint)?;
    let dataset = Dataset::load(&a.dataset)?;
    let _lock = OutputLock::for_file(&a.out)?;
    let opts = EvalOptions { full_frame: a.full_frame || cfg.eval.full_frame, ..cfg.eval.clone() };
    let bridge = connect_bridge(&cfg)?;
    let named: Vec<(String, &_)> = dataset.views.iter().map(|v| (v.stem.clone(), &v.observation)).collect();
    let report = evaluate_named(&cloud, &named, dataset.meta.observed_range, &opts, bridge.as_deref())?;
    std::fs::write(&a.out, report.to_csv())?;
    let table = report.to_table();
    std::fs::write(a.out.with_extension("txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn render(a: &RenderArgs) -> CliResult<()> {
    if a.frames == 0 || a.size == 0 {
        return Err(CliError::usage("frames and size must be positive"));
    }
    let (cloud, _) = load_ckpt(&a.checkpoint)?;
    let _lock = OutputLock::acquire(&a.out)?;
    let focal = a.focal.unwrap_or(1.25 * a.size as f64);
    let cfg = RunConfig::default();
    let half = a.size as f64 / 2.0;
    for i in 0..a.frames {
        let az = 360.0 * i as f64 / a.frames as f64;
        let spec = ViewSpec::new(az, a.elevation, a.radius, [0.0; 3])?;
        let cam = camera_from_spec(&spec, focal, focal, half, half)?;
        let out = render_with(&cloud, &cam, a.size, a.size, &cfg.render)?;
        let img = out.color.composite_over(&out.alpha, cfg.init.fit.background)?;
        png::write_rgb(&a.out.join(format!("{i:03}.png")), &img)?;
    }
    println!("wrote {} frames to {}", a.frames, a.out.display());
    Ok(())
}

fn stem(spec: &ViewSpec) -> String {
    format!("az{:05.1}_el{:+05.1}", spec.azimuth, spec.elevation)
}

pub fn synth(a: &SynthArgs) -> CliResult<()> {
    let params = ToyParams { width: a.size, height: a.size, focal: 1.25 * a.size as f64, ..ToyParams::default() };
    let scene = toy_scene(&params, a.range, a.seed)?;
    let _lock = OutputLock::acquire(&a.out)?;
    let scale = scene.cloud.bounds().map_or(1.0, |b| b.half_diagonal());
    let as_views = |obs: &[zp3_core::reconstruct::Observation]| -> Vec<DatasetView> {
        obs.iter().map(|o| DatasetView { stem: stem(&o.view_spec), observation: o.clone() }).collect()
    };
    let train_meta = DatasetMeta { observed_range: a.range, elevations: vec![-30.0, 0.0, 30.0], scene_scale: scale };
    Dataset::write(&a.out.join("train"), &train_meta, &as_views(&scene.observations))?;
    let test_meta = DatasetMeta { elevations: vec![0.0, 20.0], ..train_meta };
    Dataset::write(&a.out.join("test"), &test_meta, &as_views(&scene.ground_truth))?;
    zp3_core::splat::save_cloud(&scene.cloud, &a.out.join("ground_truth.zp3g"))?;
    println!(
        "wrote {} training and {} test views to {}",
        scene.observations.len(),
        scene.ground_truth.len(),
        a.out.display()
    );
    Ok(())
}

pub fn config(a: &ConfigArgs) -> CliResult<()> {
    if a.dump_defaults {
        print!("{}", RunConfig::default().to_json());
    } else if let Some(path) = &a.check {
        print!("{}", RunConfig::load(path)?.to_json());
    }
    Ok(())
}
