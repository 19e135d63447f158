//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always printed. The
//! process exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use zp3_core::diffusion::{
    ddim_step, ddim_step_canonical, fuse_mvd, fuse_noise, lf_noise_from_render, sample_latent, schedule_weights,
    variance_compensate, FusionWeights, NoiseSchedule, SampleOptions, ScheduleKind, ViewPrediction,
};
use zp3_core::eval::{evaluate, psnr, EvalOptions};
use zp3_core::priors::protocol::{decode_reply, decode_request, encode_reply, encode_request, Reply, Request};
use zp3_core::priors::{
    oracle_predict, GaussianMixtureOracle, GroundTruthMvd, PriorBundle, ReferenceView, RequestKind, StaticPrior,
    TargetView, Tensor,
};
use zp3_core::reconstruct::{
    coarse_fit_report, composite_loss, init_cloud, refine, Perceptual, RefineConfig,
};
use zp3_core::splat::{
    covariance, layout, render_backward, render_forward, render_reference, render_with, sh_eval, Gaussian3D,
    GaussianCloud, RenderOptions, SH_COEFFS,
};
use zp3_core::synth::{toy_scene, ToyParams, ToyScene};
use zp3_core::views::{camera_from_spec, make_rotation_plan, Camera, PlanParams, ViewSpec};
use zp3_core::{Domain, Image};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rel_err(actual: f64, expected: f64) -> f64 {
    if expected == 0.0 {
        actual.abs()
    } else {
        (actual - expected).abs() / expected.abs()
    }
}

fn scalar(v: f64) -> Image {
    Image::filled(1, 1, 1, Domain::Sampling, v)
}

fn pixels(values: &[f64]) -> Image {
    Image::from_vec(values.len(), 1, 1, Domain::Sampling, values.to_vec()).unwrap()
}

// ---------------------------------------------------------------- 1

fn formula_probes() -> Outcome {
    let w = FusionWeights { tau: 22.0, sigma: 7.0, eta: 4.0 };
    let tanh1 = 1f64.tanh();
    let linear = NoiseSchedule::new(50, ScheduleKind::LinearBeta).unwrap();
    let cosine = NoiseSchedule::new(2, ScheduleKind::Cosine).unwrap();
    let lf_sched = NoiseSchedule::from_alpha_bar(ScheduleKind::LinearBeta, vec![0.9, 0.64]).unwrap();
    let step_sched = NoiseSchedule::from_alpha_bar(ScheduleKind::LinearBeta, vec![0.9, 0.5]).unwrap();

    let mut probes: Vec<(&str, f64, f64)> = Vec::new();
    probes.push(("linear alpha_bar[0]", linear.alpha_bar(0), 1.0 - 1e-4));
    probes.push(("cosine alpha_bar[0]", cosine.alpha_bar(0), ((0.008 / 1.008) * std::f64::consts::FRAC_PI_2).cos().powi(2)));
    let (lf, hf) = schedule_weights(22.0, &w);
    probes.push(("w_lf(tau)", lf, 0.5));
    probes.push(("w_hf(tau)", hf, 0.125));
    let (lf, hf) = schedule_weights(29.0, &w);
    probes.push(("w_lf(29)", lf, (1.0 - tanh1) / 2.0));
    probes.push(("w_hf(29)", hf, (1.0 - (1.0 - tanh1) / 2.0) / 4.0));
    let (lf, hf) = schedule_weights(15.0, &w);
    probes.push(("w_lf(15)", lf, (1.0 + tanh1) / 2.0));
    probes.push(("w_hf(15)", hf, (1.0 - tanh1) / 8.0));
    // Published seven-digit values.
    let printed = [(lf, 0.8807971), (hf, 0.0298007), (schedule_weights(29.0, &w).1, 0.2201993)];
    let printed_ok = printed.iter().all(|(a, e)| (a - e).abs() <= 5e-8);
    let eps = lf_noise_from_render(&scalar(1.0), &scalar(0.5), 1, &lf_sched).unwrap();
    probes.push(("lf noise", eps.data()[0], 1.0));
    let views: Vec<ViewPrediction> = [(1.0, 2.0), (0.0, 1.5), (-1.0, 1.0)]
        .iter()
        .map(|&(e, wt)| ViewPrediction { noise: scalar(e), weight: wt, source_view_id: String::new() })
        .collect();
    probes.push(("fuse_mvd", fuse_mvd(&views, true).unwrap().data()[0], 1.0 / 4.5));
    let fused = fuse_noise(&scalar(0.1), &scalar(0.2), &scalar(0.4), 22.0, &w).unwrap();
    probes.push(("fuse_noise(tau)", fused.data()[0], 0.325));
    let stepped = ddim_step(&scalar(1.0), &scalar(1.0), 1, &step_sched).unwrap();
    probes.push(("ddim_step", stepped.data()[0], 1.0 + (0.9f64.sqrt() - 0.5f64.sqrt()) / 0.5f64.sqrt()));
    let (lambda, _) = variance_compensate(
        &pixels(&[1.0, -1.0]),
        &pixels(&[0.75f64.sqrt(), -(0.75f64.sqrt())]),
        &pixels(&[0.5, -0.5]),
        1e-8,
    )
    .unwrap();
    probes.push(("variance lambda", lambda[0], 2f64.sqrt()));
    let oracle = GaussianMixtureOracle::single(scalar(0.0), 1.0).unwrap();
    probes.push(("oracle epsilon", oracle_predict(&scalar(2.0), 1, &oracle, &step_sched).unwrap().data()[0], 2f64.sqrt()));
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let g = Gaussian3D::new([0.0; 3], [2.0, 1.0, 1.0], [h, 0.0, 0.0, h], 0.5, [[0.0; 3]; SH_COEFFS]).unwrap();
    let cov = covariance(&g);
    for (i, row) in cov.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let expected = if i != j { 0.0 } else if i == 1 { 4.0 } else { 1.0 };
            probes.push(("covariance", *v + 1.0, expected + 1.0));
        }
    }
    let mut sh = [[0.0; 3]; SH_COEFFS];
    sh[0] = [0.4, -0.2, 1.0];
    let color = sh_eval(&sh, [0.3, -0.5, 0.8]);
    for (c, coeff) in color.iter().zip(sh[0]) {
        probes.push(("sh degree 0", *c, (0.2820948 * coeff + 0.5).clamp(0.0, 1.0)));
    }
    let a = Image::filled(8, 8, 3, Domain::Pixel, 0.3);
    let b = Image::filled(8, 8, 3, Domain::Pixel, 0.4);
    probes.push(("composite loss offset", composite_loss(&a, &b, None, 1.0, Perceptual::MultiscaleL1, None).unwrap().0, 0.2));
    probes.push(("psnr offset", psnr(&a, &b, None).unwrap(), 20.0));

    let worst = probes.iter().map(|(n, a, e)| (*n, rel_err(*a, *e))).fold(("", 0.0), |m, p| if p.1 > m.1 { p } else { m });
    let decreasing = linear.alpha_bars().windows(2).all(|w| w[1] < w[0]);
    outcome(
        worst.1 <= 1e-6 && decreasing && printed_ok,
        format!("{} probes, worst relative error {:.1e} ({})", probes.len(), worst.1, worst.0),
    )
}

// ---------------------------------------------------------------- 2

fn camera(azimuth: f64, elevation: f64, size: usize) -> Camera {
    let spec = ViewSpec::new(azimuth, elevation, 4.0, [0.0; 3]).unwrap();
    let f = size as f64 * 1.2;
    camera_from_spec(&spec, f, f, size as f64 / 2.0, size as f64 / 2.0).unwrap()
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, scales: (f64, f64)) -> GaussianCloud {
    (0..n)
        .map(|_| {
            let mut sh = [[0.0; 3]; SH_COEFFS];
            for (k, coeff) in sh.iter_mut().enumerate() {
                let r = if k == 0 { 1.0 } else { 0.1 };
                *coeff = std::array::from_fn(|_| rng.random_range(-r..r));
            }
            Gaussian3D::new(
                std::array::from_fn(|_| rng.random_range(-0.8..0.8)),
                std::array::from_fn(|_| rng.random_range(scales.0..scales.1)),
                std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
                rng.random_range(0.2..0.9),
                sh,
            )
            .unwrap()
        })
        .collect()
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize, lo: f64) -> Image {
    Image::from_vec(w, h, c, Domain::Pixel, (0..w * h * c).map(|_| rng.random_range(lo..1.0)).collect()).unwrap()
}

fn symmetric_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn gradients() -> Outcome {
    const SIZE: usize = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = RenderOptions::smooth();
    let (mut geometric, mut linear): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let n = rng.random_range(1..=3);
        let cloud = random_cloud(&mut rng, n, (0.1, 0.4));
        let cam = camera(rng.random_range(0.0..360.0), rng.random_range(-40.0..40.0), SIZE);
        let up_c = random_image(&mut rng, SIZE, SIZE, 3, -1.0);
        let up_a = random_image(&mut rng, SIZE, SIZE, 1, -1.0);
        let loss = |c: &GaussianCloud| {
            let out = render_with(c, &cam, SIZE, SIZE, &opts).unwrap();
            let a: f64 = out.color.data().iter().zip(up_c.data()).map(|(x, y)| x * y).sum();
            let b: f64 = out.alpha.data().iter().zip(up_a.data()).map(|(x, y)| x * y).sum();
            a + b
        };
        let (_, ctx) = render_forward(&cloud, &cam, SIZE, SIZE, &opts).unwrap();
        let grads = render_backward(&cloud, &cam, &ctx, &up_c, Some(&up_a)).unwrap();
        for g in 0..cloud.len() {
            for p in 0..zp3_core::splat::PARAM_COUNT {
                let shifted = |d: f64| {
                    let mut c = cloud.clone();
                    let mut params = c.gaussians[g].to_params();
                    params[p] += d;
                    c.gaussians[g] = Gaussian3D::from_params(&params);
                    loss(&c)
                };
                let fd = (shifted(1e-4) - shifted(-1e-4)) / 2e-4;
                let err = symmetric_err(grads.params[g][p], fd);
                if p >= layout::SH || p == layout::OPACITY {
                    linear = linear.max(err);
                } else {
                    geometric = geometric.max(err);
                }
            }
        }
    }

    let mut pixel: f64 = 0.0;
    for case in 0..50 {
        let render = random_image(&mut rng, 8, 8, 3, 0.0);
        let target = random_image(&mut rng, 8, 8, 3, 0.0);
        let mask = (case % 2 == 0).then(|| {
            let m = (0..64).map(|_| if rng.random_bool(0.7) { 1.0 } else { 0.0 }).collect();
            Image::from_vec(8, 8, 1, Domain::Pixel, m).unwrap()
        });
        let lambda = rng.random_range(0.0..2.0);
        let eval = |r: &Image| composite_loss(r, &target, mask.as_ref(), lambda, Perceptual::MultiscaleL1, None).unwrap();
        let grad = eval(&render).1;
        for i in 0..render.data().len() {
            let mut plus = render.clone();
            plus.data_mut()[i] += 1e-7;
            let mut minus = render.clone();
            minus.data_mut()[i] -= 1e-7;
            let fd = (eval(&plus).0 - eval(&minus).0) / 2e-7;
            if grad.data()[i].abs().max(fd.abs()) > 1e-9 {
                pixel = pixel.max(symmetric_err(grad.data()[i], fd));
            }
        }
    }
    outcome(
        geometric <= 1e-2 && linear <= 1e-3 && pixel <= 1e-4,
        format!("50 scenes + 50 images; geometry {geometric:.1e}, linear {linear:.1e}, loss-vs-pixels {pixel:.1e}"),
    )
}

// ---------------------------------------------------------------- 3

fn renderer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let opts = RenderOptions { tile_size: 8, ..RenderOptions::default() };
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=100);
        let cloud = random_cloud(&mut rng, n, (0.02, 0.3));
        let cam = camera(rng.random_range(0.0..360.0), rng.random_range(-60.0..60.0), 32);
        let fast = render_with(&cloud, &cam, 32, 32, &opts).unwrap();
        let slow = render_reference(&cloud, &cam, 32, 32, &opts).unwrap();
        for (a, b) in fast.color.data().iter().zip(slow.color.data()).chain(fast.alpha.data().iter().zip(slow.alpha.data())) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= 1e-6, format!("100 clouds at 32x32, max difference {worst:.1e}"))
}

// ---------------------------------------------------------------- 4

fn sampler() -> Outcome {
    let mu = [0.4, -0.3, 0.1];
    let s = 0.2;
    let sched = NoiseSchedule::new(50, ScheduleKind::LinearBeta).unwrap();
    let mut mean = Image::zeros(1, 1, 3, Domain::Sampling);
    for (c, m) in mu.iter().enumerate() {
        mean.set(0, 0, c, *m);
    }
    let oracle = Arc::new(GaussianMixtureOracle::single(mean, s).unwrap());
    let spec = ViewSpec::new(0.0, 0.0, 3.0, [0.0; 3]).unwrap();
    let reference = ReferenceView { id: "ref".into(), spec, image: Image::zeros(1, 1, 3, Domain::Pixel) };
    let bundle = PriorBundle::new(Arc::new(StaticPrior(oracle)), vec![reference]);
    let target = TargetView::from_spec("t", spec, 2.0, 1, 1).unwrap();
    let mut worst_mean: f64 = 0.0;
    for eta in [0.0, 1.0] {
        let opts = SampleOptions { eta, ..SampleOptions::default() };
        let mut sums = [0.0; 3];
        for seed in 0..64 {
            let (x, _) = sample_latent(&target, &bundle, &sched, &FusionWeights::default(), seed, &opts).unwrap();
            for (c, acc) in sums.iter_mut().enumerate() {
                *acc += x.get(0, 0, c);
            }
        }
        for (acc, m) in sums.iter().zip(mu) {
            worst_mean = worst_mean.max((acc / 64.0 - m).abs());
        }
    }

    // Probability-flow ODE in u = ln(alpha_bar) with the closed-form noise.
    let (m, sd) = (0.4, 0.2);
    let eps_exact = |x: f64, a: f64| (1.0 - a).sqrt() * (x - a.sqrt() * m) / (a * sd * sd + 1.0 - a);
    let scalar_oracle = GaussianMixtureOracle::single(scalar(m), sd).unwrap();
    let mut worst_traj: f64 = 0.0;
    for start in [-1.3, 0.7, 2.1] {
        let mut x = scalar(start);
        let mut ode = start;
        let (mut num, mut den) = (0.0, 0.0);
        for t in (1..50).rev() {
            let eps = oracle_predict(&x, t, &scalar_oracle, &sched).unwrap();
            x = ddim_step_canonical(&x, &eps, t, &sched, 0.0, None).unwrap().sample();
            let (u0, u1) = (sched.alpha_bar(t).ln(), sched.alpha_bar(t - 1).ln());
            let h = (u1 - u0) / 1000.0;
            for k in 0..1000 {
                let a = (u0 + k as f64 * h).exp();
                ode += h * 0.5 * (ode - eps_exact(ode, a) / (1.0 - a).sqrt());
            }
            num += (x.data()[0] - ode).powi(2);
            den += ode * ode;
        }
        worst_traj = worst_traj.max((num / den).sqrt());
    }
    outcome(
        worst_mean <= 3.0 * s / 8.0 && worst_traj < 1e-2,
        format!(
            "64 chains, worst mean offset {worst_mean:.3} (limit {:.3}); trajectory error {worst_traj:.1e}",
            3.0 * s / 8.0
        ),
    )
}

// ---------------------------------------------------------------- 5, 6

struct ToyRun {
    scene: ToyScene,
    coarse: GaussianCloud,
    coarse_secs: f64,
    bundle: PriorBundle,
}

fn toy_setup() -> ToyRun {
    let start = Instant::now();
    let scene = toy_scene(&ToyParams::default(), (0.0, 90.0), 7).unwrap();
    let init = init_cloud(&scene.observations, 1000, 1).unwrap();
    let mut fit = zp3_core::reconstruct::FitConfig::default();
    fit.density.until = 1000;
    let coarse = coarse_fit_report(&init, &scene.observations, 1500, &fit).unwrap().cloud;
    let references = scene
        .observations
        .iter()
        .filter(|o| o.view_spec.elevation == 0.0 && o.view_spec.azimuth % 45.0 == 0.0)
        .map(|o| ReferenceView { id: format!("ref{}", o.view_spec.azimuth), spec: o.view_spec, image: o.image.clone() })
        .collect();
    let bundle = PriorBundle::new(Arc::new(GroundTruthMvd::new(Arc::new(scene.cloud.clone()))), references);
    ToyRun { scene, coarse, coarse_secs: start.elapsed().as_secs_f64(), bundle }
}

fn toy_refine(run: &ToyRun, lf: bool) -> (f64, f64, f64) {
    let start = Instant::now();
    let mut cfg = RefineConfig {
        steps_per_iteration: 400,
        densify_until: 200,
        plan: make_rotation_plan(&PlanParams { iterations: 8, delta_theta: 45.0, delta_e: 6.0, ..PlanParams::default() })
            .unwrap(),
        ..RefineConfig::default()
    };
    cfg.sample.disable_lf = !lf;
    cfg.density.max_gaussians = 4000;
    let refined = refine(&run.coarse, &run.scene.observations, &cfg, &run.bundle, 3).unwrap();
    let report = evaluate(&refined, &run.scene.ground_truth, run.scene.observed_range, &EvalOptions::default()).unwrap();
    (report.visible.psnr, report.invisible.psnr, start.elapsed().as_secs_f64())
}

// ---------------------------------------------------------------- 7

fn coverage() -> Outcome {
    let mut worst: f64 = 0.0;
    for iterations in [8, 9, 12, 16] {
        let plan = make_rotation_plan(&PlanParams {
            theta0: 0.0,
            delta_theta: 45.0,
            delta_e: 6.0,
            iterations,
            batch_size: 8,
            ..PlanParams::default()
        })
        .unwrap();
        let mut az: Vec<f64> = plan.azimuths().iter().map(|a| a.rem_euclid(360.0)).collect();
        az.sort_by(f64::total_cmp);
        az.dedup();
        let mut gap = 360.0 - az[az.len() - 1] + az[0];
        for w in az.windows(2) {
            gap = gap.max(w[1] - w[0]);
        }
        worst = worst.max(gap);
    }
    outcome(worst <= 6.0 + 1e-9, format!("iterations 8..16, max azimuth gap {worst:.6} deg"))
}

// ---------------------------------------------------------------- 8

// Per-channel pixel values with exact sample variance `var`, decorrelated
// from `against` when given.
fn draw_channel(rng: &mut ChaCha8Rng, n: usize, var: f64, against: Option<&[f64]>) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let center = |v: &mut Vec<f64>| {
        let m = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|x| *x -= m);
    };
    center(&mut v);
    if let Some(a) = against {
        let ma = a.iter().sum::<f64>() / n as f64;
        let aa: Vec<f64> = a.iter().map(|x| x - ma).collect();
        let proj = v.iter().zip(&aa).map(|(x, y)| x * y).sum::<f64>() / aa.iter().map(|y| y * y).sum::<f64>();
        v.iter_mut().zip(&aa).for_each(|(x, y)| *x -= proj * y);
    }
    let scale = (var / (v.iter().map(|x| x * x).sum::<f64>() / n as f64)).sqrt();
    v.iter_mut().for_each(|x| *x *= scale);
    v
}

fn variance_compensation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (n, channels) = (256, 3);
    let (mut checked, mut worst) = (0, 0.0f64);
    for _ in 0..1000 {
        let mut orig = Vec::new();
        let mut avg = Vec::new();
        let mut noise = Vec::new();
        let mut targets = Vec::new();
        let mut nonneg = Vec::new();
        for _ in 0..channels {
            let (vo, vd, vn) = (rng.random_range(0.05..2.0), rng.random_range(0.05..2.0), rng.random_range(0.01..1.0));
            let o = draw_channel(&mut rng, n, vo, None);
            let d = draw_channel(&mut rng, n, vd, None);
            let z = draw_channel(&mut rng, n, vn, Some(&d));
            orig.push(o);
            avg.push(d.iter().zip(&z).map(|(a, b)| a + b).collect::<Vec<_>>());
            noise.push(z);
            targets.push(vo);
            nonneg.push(vo - vd >= 0.0);
        }
        let interleave = |ch: &[Vec<f64>]| {
            let data = (0..n * channels).map(|i| ch[i % channels][i / channels]).collect();
            Image::from_vec(n, 1, channels, Domain::Sampling, data).unwrap()
        };
        let (_, out) = variance_compensate(&interleave(&orig), &interleave(&avg), &interleave(&noise), 1e-8).unwrap();
        for c in 0..channels {
            if nonneg[c] {
                checked += 1;
                worst = worst.max(rel_err(out.channel_variance(c), targets[c]));
            }
        }
    }
    outcome(worst <= 0.05, format!("{checked} channels with nonnegative numerator, worst variance error {:.2}%", worst * 100.0))
}

// ---------------------------------------------------------------- 9

fn random_tensor(rng: &mut ChaCha8Rng) -> Tensor {
    let (h, w, c) = (rng.random_range(1..9), rng.random_range(1..9), rng.random_range(1..5));
    let data = (0..h * w * c)
        .map(|_| match rng.random_range(0..10) {
            0 => f32::from_bits(rng.random()),
            1 => -0.0,
            _ => rng.random_range(-1e3f32..1e3),
        })
        .collect();
    Tensor::new(h, w, c, data).unwrap()
}

fn bits(t: &Tensor) -> (u32, u32, u32, Vec<u32>) {
    (t.height, t.width, t.channels, t.data.iter().map(|v| v.to_bits()).collect())
}

fn zp3(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_zp3"))
        .args(args)
        .env("ZP3_THREADS", "1")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn cli_session(root: &Path) -> bool {
    let p = |rel: &str| root.join(rel).to_string_lossy().into_owned();
    fs::create_dir_all(root).unwrap();
    fs::write(
        root.join("tiny.json"),
        r#"{"init": {"points": 200, "steps": 40},
            "plan": {"delta_theta": 90, "iterations": 2, "batch_size": 2, "elevations": [0]},
            "refine": {"steps_per_iteration": 15, "densify_until": 5},
            "schedule": {"steps": 8}}"#,
    )
    .unwrap();
    let cfg = p("tiny.json");
    zp3(&["synth", "--out", &p("toy"), "--seed", "4", "--size", "32"])
        && zp3(&["init", &p("toy/train"), "--out", &p("coarse.zp3g"), "--config", &cfg, "--seed", "2"])
        && zp3(&["sample", &p("coarse.zp3g"), "--dataset", &p("toy/train"), "--view", "200,10", "--out", &p("s/v.png"), "--seed", "5", "--config", &cfg])
        && zp3(&["refine", &p("coarse.zp3g"), &p("toy/train"), "--out", &p("r"), "--config", &cfg, "--seed", "6"])
        && zp3(&["eval", &p("r/final.zp3g"), &p("toy/test"), "--out", &p("e/report.csv")])
        && zp3(&["render", &p("r/final.zp3g"), "--frames", "3", "--out", &p("frames"), "--size", "32"])
}

fn protocol_and_determinism() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut exact = 0;
    for i in 0..1000 {
        let tensors: Vec<Tensor> = (0..rng.random_range(1..4)).map(|_| random_tensor(&mut rng)).collect();
        let kind = [RequestKind::Mvd, RequestKind::Hf, RequestKind::Lpips][i % 3];
        let req = Request { kind, t: rng.random(), tensors };
        let back = decode_request(&encode_request(&req).unwrap()).unwrap();
        let reply = Reply { status: rng.random_range(0..3), tensor: random_tensor(&mut rng) };
        let reply_back = decode_reply(&encode_reply(&reply)).unwrap();
        let same_req = back.kind == req.kind
            && back.t == req.t
            && back.tensors.iter().map(bits).eq(req.tensors.iter().map(bits));
        let same_reply = reply_back.status == reply.status && bits(&reply_back.tensor) == bits(&reply.tensor);
        if same_req && same_reply {
            exact += 1;
        }
    }

    let dir = tempfile::TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ran = cli_session(&a) && cli_session(&b);
    let (ta, tb) = (tree(&a), tree(&b));
    let differing: Vec<String> = ta
        .iter()
        .filter(|(k, v)| tb.get(*k) != Some(*v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    let same_files = ta.len() == tb.len() && differing.is_empty();
    outcome(
        exact == 1000 && ran && same_files,
        format!(
            "{exact}/1000 round trips bit-exact; CLI ran: {ran}, {} files compared, {} differ{}",
            ta.len(),
            differing.len(),
            differing.first().map(|d| format!(" (first: {d})")).unwrap_or_default()
        ),
    )
}

// ----------------------------------------------------------------

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let o = f();
    (o, start.elapsed())
}

fn report(id: usize, name: &str, limit: Duration, (o, took): (Outcome, Duration)) -> bool {
    let in_time = took <= limit;
    let pass = o.pass && in_time;
    let timing = if in_time {
        format!("{:.1}s", took.as_secs_f64())
    } else {
        format!("{:.1}s, over the {}s limit", took.as_secs_f64(), limit.as_secs())
    };
    println!("{} [{id}] {name}: {} ({timing})", if pass { "PASS" } else { "FAIL" }, o.detail);
    pass
}

fn main() {
    // `cargo test -- --list` and similar probes pass flags; only run for real
    // invocations.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let secs = Duration::from_secs;
    let mut results = Vec::new();
    results.push(report(1, "formula exactness", secs(1), timed(formula_probes)));
    results.push(report(2, "gradient suite", secs(120), timed(gradients)));
    results.push(report(3, "renderer oracle", secs(60), timed(renderer_oracle)));
    results.push(report(4, "sampler correctness", secs(60), timed(sampler)));

    let toy = toy_setup();
    let baseline = evaluate(&toy.coarse, &toy.scene.ground_truth, toy.scene.observed_range, &EvalOptions::default()).unwrap();
    let (vis, invis, full_secs) = toy_refine(&toy, true);
    let gain = invis - baseline.invisible.psnr;
    let drop = baseline.visible.psnr - vis;
    let full = Outcome {
        pass: gain >= 1.0 && drop <= 1.0,
        detail: format!(
            "invisible {:.2} -> {invis:.2} dB ({gain:+.2}), visible {:.2} -> {vis:.2} dB ({:+.2})",
            baseline.invisible.psnr, baseline.visible.psnr, -drop
        ),
    };
    results.push(report(5, "fusion effect", secs(600), (full, Duration::from_secs_f64(toy.coarse_secs + full_secs))));
    let (_, invis_off, off_secs) = toy_refine(&toy, false);
    let ablation = Outcome {
        pass: invis_off <= invis,
        detail: format!("invisible PSNR without LF {invis_off:.2} dB vs {invis:.2} dB with LF"),
    };
    results.push(report(6, "ablation direction", secs(600), (ablation, Duration::from_secs_f64(toy.coarse_secs + off_secs))));

    results.push(report(7, "coverage invariant", secs(1), timed(coverage)));
    results.push(report(8, "variance compensation", secs(5), timed(variance_compensation)));
    results.push(report(9, "protocol and determinism", secs(60), timed(protocol_and_determinism)));

    let passed = results.iter().filter(|p| **p).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
