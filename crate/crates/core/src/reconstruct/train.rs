use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, LearningRates};
use super::loss::{composite_loss, masked_mse, Perceptual};
use super::observation::Observation;
use crate::error::{Error, Result};
use crate::image::{Domain, Image};
use crate::priors::BridgeClient;
use crate::splat::{
    densify_indexed, prune_indexed, render_backward, render_forward, DensifyOptions, Gaussian3D, GaussianCloud,
    Params, RenderOptions,
};
use crate::views::Camera;

/// Adaptive density control schedule shared by fitting and refinement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensitySchedule {
    pub options: DensifyOptions,
    pub from: usize,
    pub until: usize,
    pub interval: usize,
    pub prune_opacity: f64,
    /// Densification is skipped while the cloud is at least this large.
    pub max_gaussians: usize,
}

impl Default for DensitySchedule {
    fn default() -> Self {
        Self {
            options: DensifyOptions::default(),
            from: 100,
            until: 1300,
            interval: 100,
            prune_opacity: 0.005,
            max_gaussians: 20_000,
        }
    }
}

impl DensitySchedule {
    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 {
            return Err(Error::invalid("densify interval must be positive"));
        }
        if !(0.0..1.0).contains(&self.prune_opacity) {
            return Err(Error::invalid("prune opacity must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Photometric {
    Mse,
    Composite { lambda: f64, perceptual: Perceptual },
}

/// One training image with its loss mask, silhouette and weight.
#[derive(Clone, Debug)]
pub(crate) struct TrainView {
    pub camera: Camera,
    pub target: Image,
    pub mask: Option<Image>,
    pub silhouette: Option<Image>,
    pub weight: f64,
}

impl TrainView {
    pub fn from_observation(o: &Observation) -> Self {
        Self {
            camera: o.camera.clone(),
            target: o.image.clone(),
            mask: Some(o.mask.clone()),
            silhouette: Some(o.mask.clone()),
            weight: 1.0,
        }
    }
}

pub(crate) struct Session<'a> {
    pub lr: &'a LearningRates,
    pub density: &'a DensitySchedule,
    pub render: &'a RenderOptions,
    pub background: [f64; 3],
    pub alpha_weight: f64,
    pub extent: f64,
    pub loss: Photometric,
    pub bridge: Option<&'a BridgeClient>,
}

/// Scene extent used to scale position steps and the clone/split boundary.
pub(crate) fn scene_extent(cloud: &GaussianCloud) -> f64 {
    cloud.bounds().map_or(1.0, |b| b.half_diagonal()).max(1e-3)
}

fn view_loss(s: &Session, cloud: &GaussianCloud, v: &TrainView) -> Result<(f64, crate::splat::RenderGradients)> {
    let (w, h) = (v.target.width(), v.target.height());
    let (out, ctx) = render_forward(cloud, &v.camera, w, h, s.render)?;
    let comp = out.color.composite_over(&out.alpha, s.background)?;
    let (mut loss, mut d_color) = match s.loss {
        Photometric::Mse => masked_mse(&comp, &v.target, v.mask.as_ref())?,
        Photometric::Composite { lambda, perceptual } => {
            composite_loss(&comp, &v.target, v.mask.as_ref(), lambda, perceptual, s.bridge)?
        }
    };
    let mut d_alpha = Image::zeros(w, h, 1, Domain::Pixel);
    for (da, g) in d_alpha.data_mut().iter_mut().zip(d_color.data().chunks_exact(3)) {
        *da = -(g[0] * s.background[0] + g[1] * s.background[1] + g[2] * s.background[2]);
    }
    if let (Some(sil), true) = (&v.silhouette, s.alpha_weight > 0.0) {
        let (la, ga) = masked_mse(&out.alpha, sil, None)?;
        loss += s.alpha_weight * la;
        for (da, g) in d_alpha.data_mut().iter_mut().zip(ga.data()) {
            *da += s.alpha_weight * g;
        }
    }
    if v.weight != 1.0 {
        loss *= v.weight;
        d_color = d_color.map(|g| g * v.weight);
        d_alpha = d_alpha.map(|g| g * v.weight);
    }
    let grads = render_backward(cloud, &v.camera, &ctx, &d_color, Some(&d_alpha))?;
    Ok((loss, grads))
}

/// Runs `steps` single-view Adam steps with density control and returns the
/// optimized cloud together with the per-step losses.
pub(crate) fn optimize(
    cloud: &GaussianCloud,
    views: &[TrainView],
    steps: usize,
    s: &Session,
    seed: u64,
) -> Result<(GaussianCloud, Vec<f64>)> {
    if views.is_empty() {
        return Err(Error::invalid("optimization needs at least one training view"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cloud = cloud.clone();
    let mut params: Vec<Params> = cloud.iter().map(Gaussian3D::to_params).collect();
    let mut adam = Adam::new(cloud.len());
    let mut grad_sum = vec![0.0; cloud.len()];
    let mut grad_count = vec![0u32; cloud.len()];
    let mut order: Vec<usize> = Vec::new();
    let mut losses = Vec::with_capacity(steps);

    for step in 1..=steps {
        if order.is_empty() {
            order = (0..views.len()).collect();
            order.shuffle(&mut rng);
        }
        let v = &views[order.pop().expect("refilled above")];
        let (loss, grads) = view_loss(s, &cloud, v)?;
        if !loss.is_finite() {
            return Err(Error::OptimizationFailure(format!("loss became non-finite at step {step}")));
        }
        losses.push(loss);

        let lr = s.lr.per_slot((step - 1) as f64 / steps as f64, s.extent);
        adam.step(&mut params, &grads.params, &grads.visible, &lr);
        for (i, p) in params.iter().enumerate() {
            if grads.visible[i] {
                if p.iter().any(|x| !x.is_finite()) {
                    return Err(Error::OptimizationFailure(format!("parameters diverged at step {step}")));
                }
                cloud.gaussians[i] = Gaussian3D::from_params(p);
                grad_sum[i] += grads.screen_grad[i];
                grad_count[i] += 1;
            }
        }

        let d = s.density;
        if step >= d.from && step % d.interval == 0 && step < steps {
            let mut origin: Vec<usize> = (0..cloud.len()).collect();
            if step < d.until && cloud.len() < d.max_gaussians {
                let avg: Vec<f64> = grad_sum
                    .iter()
                    .zip(&grad_count)
                    .map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
                    .collect();
                let (next, o) = densify_indexed(&cloud, &avg, s.extent, &d.options, &mut rng)?;
                cloud = next;
                origin = o;
            }
            let (next, kept) = prune_indexed(&cloud, d.prune_opacity)?;
            if !next.is_empty() {
                cloud = next;
                origin = kept.iter().map(|&k| origin[k]).collect();
            }
            adam.remap(&origin);
            params = cloud.iter().map(Gaussian3D::to_params).collect();
            grad_sum = vec![0.0; cloud.len()];
            grad_count = vec![0; cloud.len()];
        }
    }
    cloud.normalize_rotations();
    cloud.validate()?;
    Ok((cloud, losses))
}

/// Settings for fitting a cloud to the observations alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub lr: LearningRates,
    pub density: DensitySchedule,
    pub render: RenderOptions,
    /// Weight of the accumulated-opacity-vs-mask term.
    pub alpha_weight: f64,
    pub background: [f64; 3],
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lr: LearningRates::default(),
            density: DensitySchedule::default(),
            render: RenderOptions::default(),
            alpha_weight: 0.1,
            background: [1.0; 3],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub cloud: GaussianCloud,
    /// Training loss of every step.
    pub losses: Vec<f64>,
}

/// Masked photometric fit of `cloud` to the observations, with a silhouette
/// term and density control.
pub fn coarse_fit(cloud: &GaussianCloud, observations: &[Observation], steps: usize, config: &FitConfig) -> Result<GaussianCloud> {
    coarse_fit_report(cloud, observations, steps, config).map(|r| r.cloud)
}

pub fn coarse_fit_report(
    cloud: &GaussianCloud,
    observations: &[Observation],
    steps: usize,
    config: &FitConfig,
) -> Result<FitReport> {
    if steps == 0 {
        return Err(Error::invalid("coarse_fit needs steps >= 1"));
    }
    if observations.is_empty() {
        return Err(Error::invalid("coarse_fit needs at least one observation"));
    }
    cloud.validate()?;
    config.lr.validate()?;
    config.density.validate()?;
    for o in observations {
        o.validate()?;
    }
    let views: Vec<TrainView> = observations.iter().map(TrainView::from_observation).collect();
    let session = Session {
        lr: &config.lr,
        density: &config.density,
        render: &config.render,
        background: config.background,
        alpha_weight: config.alpha_weight,
        extent: scene_extent(cloud),
        loss: Photometric::Mse,
        bridge: None,
    };
    let (cloud, losses) = optimize(cloud, &views, steps, &session, config.seed)?;
    Ok(FitReport { cloud, losses })
}
