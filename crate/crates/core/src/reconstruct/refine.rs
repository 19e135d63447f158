use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::LearningRates;
use super::loss::Perceptual;
use super::observation::Observation;
use super::train::{optimize, scene_extent, DensitySchedule, Photometric, Session, TrainView};
use crate::diffusion::{sample, FusionWeights, NoiseSchedule, SampleOptions, ScheduleKind};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::priors::{BridgeClient, PriorBundle, TargetView};
use crate::splat::{GaussianCloud, RenderOptions};
use crate::views::{make_rotation_plan, Camera, PlanParams, RotationPlan, ViewSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    pub steps_per_iteration: usize,
    pub densify_until: usize,
    pub lr: LearningRates,
    pub lambda: f64,
    pub perceptual: Perceptual,
    pub fusion: FusionWeights,
    pub plan: RotationPlan,
    pub schedule: ScheduleKind,
    pub sampling_steps: usize,
    pub sample: SampleOptions,
    /// Loss weight of each generated view relative to an original one.
    pub supervision_weight: f64,
    /// Keep supervision from earlier batches instead of regenerating only
    /// the current batch.
    pub retain_supervision: bool,
    pub alpha_weight: f64,
    pub background: [f64; 3],
    pub render: RenderOptions,
    /// Density control; `until` is overridden by `densify_until`.
    pub density: DensitySchedule,
    /// Focal length of generated views; defaults to the first observation's.
    pub supervision_focal: Option<f64>,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            steps_per_iteration: 3000,
            densify_until: 1300,
            lr: LearningRates::default(),
            lambda: 1.0,
            perceptual: Perceptual::MultiscaleL1,
            fusion: FusionWeights::default(),
            plan: make_rotation_plan(&PlanParams::default()).expect("default plan is valid"),
            schedule: ScheduleKind::LinearBeta,
            sampling_steps: 50,
            sample: SampleOptions::default(),
            supervision_weight: 1.0,
            retain_supervision: false,
            alpha_weight: 0.1,
            background: [1.0; 3],
            render: RenderOptions::default(),
            density: DensitySchedule::default(),
            supervision_focal: None,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_iteration == 0 {
            return Err(Error::invalid("steps_per_iteration must be positive"));
        }
        if self.densify_until > self.steps_per_iteration {
            return Err(Error::invalid("densify_until must not exceed steps_per_iteration"));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid("lambda must be non-negative"));
        }
        if !(self.supervision_weight >= 0.0) || !(self.alpha_weight >= 0.0) {
            return Err(Error::invalid("loss weights must be non-negative"));
        }
        if self.supervision_focal.is_some_and(|f| !(f > 0.0)) {
            return Err(Error::invalid("supervision focal length must be positive"));
        }
        self.lr.validate()?;
        self.fusion.validate()?;
        self.density.validate()?;
        NoiseSchedule::new(self.sampling_steps, self.schedule)?;
        Ok(())
    }

    fn density(&self) -> DensitySchedule {
        DensitySchedule { until: self.densify_until, ..self.density.clone() }
    }
}

/// A generated view used as supervision.
#[derive(Clone, Debug)]
pub struct Supervision {
    pub id: String,
    pub spec: ViewSpec,
    pub camera: Camera,
    /// Pixel domain.
    pub image: Image,
}

/// What the observer sees after each batch.
pub struct BatchOutcome<'a> {
    pub batch: usize,
    pub cloud: &'a GaussianCloud,
    /// Generated views of this batch.
    pub supervision: &'a [Supervision],
    /// Mean training loss over the batch's steps.
    pub mean_loss: f64,
}

/// Optional inputs of a refinement run.
#[derive(Default)]
pub struct RefineRun<'a> {
    /// First batch to run; earlier batches are assumed done.
    pub start_batch: usize,
    /// Supervision carried over from earlier batches when retaining.
    pub retained: Vec<Supervision>,
    pub bridge: Option<Arc<BridgeClient>>,
    pub observer: Option<&'a mut dyn FnMut(&BatchOutcome) -> Result<()>>,
}

/// Iterative refinement over the rotated-view plan.
pub fn refine(
    cloud: &GaussianCloud,
    observations: &[Observation],
    config: &RefineConfig,
    priors: &PriorBundle,
    seed: u64,
) -> Result<GaussianCloud> {
    refine_with(cloud, observations, config, priors, seed, RefineRun::default())
}

fn batch_rng(seed: u64, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch as u64 + 1);
    rng
}

pub fn refine_with(
    cloud: &GaussianCloud,
    observations: &[Observation],
    config: &RefineConfig,
    priors: &PriorBundle,
    seed: u64,
    mut run: RefineRun,
) -> Result<GaussianCloud> {
    config.validate()?;
    if config.plan.is_empty() || run.start_batch >= config.plan.len() {
        return Ok(cloud.clone());
    }
    if observations.is_empty() {
        return Err(Error::invalid("refine needs the original observations"));
    }
    for o in observations {
        o.validate()?;
    }
    cloud.validate()?;
    let sched = NoiseSchedule::new(config.sampling_steps, config.schedule)?;
    let (width, height) = (observations[0].width(), observations[0].height());
    let focal = config.supervision_focal.unwrap_or(observations[0].camera.fx);
    let density = config.density();
    let extent = scene_extent(cloud);
    let originals: Vec<TrainView> = observations.iter().map(TrainView::from_observation).collect();
    let mut retained = std::mem::take(&mut run.retained);
    let mut current = cloud.clone();

    for (b, views) in config.plan.batches.iter().enumerate().skip(run.start_batch) {
        let step = |e: Error| Error::Batch { batch: b, source: Box::new(e) };
        let mut rng = batch_rng(seed, b);
        let bundle = if config.sample.disable_lf {
            priors.clone()
        } else {
            priors.with_lf_cloud(Arc::new(current.clone()))
        };
        let jobs: Vec<(TargetView, u64)> = views
            .iter()
            .enumerate()
            .map(|(k, spec)| {
                let id = format!("b{b:02}_v{k:02}_az{:05.1}_el{:+05.1}", spec.azimuth, spec.elevation);
                Ok((TargetView::from_spec(id, *spec, focal, width, height)?, rng.next_u64()))
            })
            .collect::<Result<_>>()
            .map_err(step)?;
        let supervision: Vec<Supervision> = jobs
            .par_iter()
            .map(|(target, chain_seed)| {
                let image = sample(target, &bundle, &sched, &config.fusion, *chain_seed, &config.sample)?;
                Ok(Supervision {
                    id: target.id.clone(),
                    spec: target.spec,
                    camera: target.camera.clone(),
                    image,
                })
            })
            .collect::<Result<_>>()
            .map_err(step)?;

        if config.retain_supervision {
            retained.extend(supervision.iter().cloned());
        } else {
            retained = supervision.clone();
        }
        let mut train = originals.clone();
        train.extend(retained.iter().map(|s| TrainView {
            camera: s.camera.clone(),
            target: s.image.clone(),
            mask: None,
            silhouette: None,
            weight: config.supervision_weight,
        }));

        let session = Session {
            lr: &config.lr,
            density: &density,
            render: &config.render,
            background: config.background,
            alpha_weight: config.alpha_weight,
            extent,
            loss: Photometric::Composite { lambda: config.lambda, perceptual: config.perceptual },
            bridge: run.bridge.as_deref(),
        };
        let (next, losses) =
            optimize(&current, &train, config.steps_per_iteration, &session, rng.next_u64()).map_err(step)?;
        current = next.quantized();
        if let Some(observer) = run.observer.as_mut() {
            let mean_loss = losses.iter().sum::<f64>() / losses.len() as f64;
            observer(&BatchOutcome { batch: b, cloud: &current, supervision: &supervision, mean_loss }).map_err(step)?;
        }
    }
    Ok(current)
}
