//! The fused DDIM sampling loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::fusion::{
    ddim_step, ddim_step_canonical, fuse_mvd, fuse_noise_weighted, lf_noise_from_render, schedule_weights,
    variance_compensate, FusionWeights, ViewPrediction,
};
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::image::{Domain, Image, LatentImage};
use crate::priors::{NoisePredictor, PriorBundle, TargetView};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    /// Standard DDIM through the predicted clean image.
    #[default]
    Canonical,
    /// The one-line update of [`ddim_step`](super::ddim_step); deterministic.
    Simplified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleOptions {
    pub update: UpdateRule,
    /// DDIM stochasticity; zero gives the deterministic sampler.
    pub eta: f64,
    /// Rescale the injected noise per channel to keep single-view variance.
    pub variance_compensation: bool,
    pub delta: f64,
    /// Normalize multi-view weights to sum to one.
    pub normalize_mvd: bool,
    /// Evaluate the prior weights at `steps - 1 - t` instead of `t`.
    pub invert_t: bool,
    /// Force the low-frequency weight to zero.
    pub disable_lf: bool,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            update: UpdateRule::Canonical,
            eta: 0.0,
            variance_compensation: true,
            delta: 1e-8,
            normalize_mvd: true,
            invert_t: false,
            disable_lf: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub w_lf: f64,
    pub w_hf: f64,
    /// Per-channel compensation factors, when compensation ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub steps: Vec<StepRecord>,
}

struct BoundView {
    id: String,
    weight: f64,
    predictor: Box<dyn NoisePredictor>,
}

fn standard_normal(rng: &mut ChaCha8Rng, like: &Image) -> Image {
    let data = (0..like.data().len()).map(|_| StandardNormal.sample(rng)).collect();
    Image::from_vec(like.width(), like.height(), like.channels(), Domain::Sampling, data).expect("matching length")
}

/// Runs one chain and returns the final sampling-domain image with a record
/// of the prior weights used at each step.
pub fn sample_latent(
    target: &TargetView,
    providers: &PriorBundle,
    sched: &NoiseSchedule,
    w: &FusionWeights,
    seed: u64,
    opts: &SampleOptions,
) -> Result<(LatentImage, SampleTrace)> {
    w.validate()?;
    if target.width == 0 || target.height == 0 {
        return Err(Error::invalid("target view must be at least 1x1"));
    }
    if providers.references.is_empty() {
        return Err(Error::invalid("sampling needs at least one reference view"));
    }
    if !(opts.eta >= 0.0) || !(opts.delta > 0.0) {
        return Err(Error::invalid("sampler needs eta >= 0 and delta > 0"));
    }

    let x_lf = match (&providers.lf, opts.disable_lf) {
        (Some(prior), false) => Some(prior.render(target)?),
        _ => None,
    };
    let mut views = Vec::with_capacity(providers.references.len());
    for r in &providers.references {
        views.push(BoundView {
            id: r.id.clone(),
            weight: providers.classifier.weight(r.spec.azimuth, target.spec.azimuth),
            predictor: providers.mvd.bind(target, Some(r), x_lf.as_ref())?,
        });
    }
    // The single most trusted view, used as the unfused baseline for compensation.
    let top = views
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if v.weight > views[best].weight { i } else { best });
    let hf = match &providers.hf {
        Some(src) => Some(src.bind(target, None, x_lf.as_ref())?),
        None => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Image::zeros(target.width, target.height, 3, Domain::Sampling);
    let mut x = standard_normal(&mut rng, &shape);
    let steps = sched.steps();
    let mut trace = SampleTrace::default();

    for t in (1..steps).rev() {
        let t_w = if opts.invert_t { steps - 1 - t } else { t };
        let (mut w_lf, w_hf) = schedule_weights(t_w as f64, w);
        let eps_lf = match &x_lf {
            Some(lf) => lf_noise_from_render(&x, lf, t, sched)?,
            None => {
                w_lf = 0.0;
                x.filled_like(0.0)
            }
        };
        let eps_hf = match &hf {
            Some(p) => p.predict(&x, t, sched)?,
            None => x.filled_like(0.0),
        };
        let mut preds = Vec::with_capacity(views.len());
        for v in &views {
            preds.push(ViewPrediction {
                noise: v.predictor.predict(&x, t, sched)?,
                weight: v.weight,
                source_view_id: v.id.clone(),
            });
        }
        let eps_mvd = fuse_mvd(&preds, opts.normalize_mvd)?;
        let eps = fuse_noise_weighted(&eps_mvd, &eps_hf, &eps_lf, w_lf, w_hf)?;

        let mut lambda = None;
        x = match opts.update {
            UpdateRule::Simplified => ddim_step(&x, &eps, t, sched)?,
            UpdateRule::Canonical => {
                let z = (opts.eta > 0.0).then(|| standard_normal(&mut rng, &x));
                let step = ddim_step_canonical(&x, &eps, t, sched, opts.eta, z.as_ref())?;
                match (&step.noise, opts.variance_compensation) {
                    (Some(noise), true) => {
                        let eps_orig = fuse_noise_weighted(&preds[top].noise, &eps_hf, &eps_lf, w_lf, w_hf)?;
                        let orig = ddim_step_canonical(&x, &eps_orig, t, sched, opts.eta, z.as_ref())?;
                        let (l, adjusted) = variance_compensate(&orig.sample(), &step.sample(), noise, opts.delta)?;
                        lambda = Some(l);
                        adjusted
                    }
                    _ => step.sample(),
                }
            }
        };
        trace.steps.push(StepRecord { t, w_lf, w_hf, lambda });
    }
    Ok((x, trace))
}

/// Runs one chain and returns the result as a pixel-domain image clamped to
/// `[0, 1]`.
pub fn sample(
    target: &TargetView,
    providers: &PriorBundle,
    sched: &NoiseSchedule,
    w: &FusionWeights,
    seed: u64,
    opts: &SampleOptions,
) -> Result<Image> {
    let (x, _) = sample_latent(target, providers, sched, w, seed, opts)?;
    Ok(x.to_pixel().clamped(0.0, 1.0))
}
