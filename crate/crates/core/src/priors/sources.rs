//! Prior sources: factories that bind a predictor to one target view.

use std::sync::Arc;

use super::bridge::{BridgeClient, BridgePredictor};
use super::oracle::{GaussianMixtureOracle, NoisePredictor, NullPredictor};
use super::protocol::{RequestKind, Tensor};
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::wrap_degrees;
use crate::splat::{render_with, GaussianCloud, RenderOptions};
use crate::views::{camera_from_spec, far_field_adapt, Camera, ViewClassifier, ViewSpec};

/// A view to be generated.
#[derive(Clone, Debug)]
pub struct TargetView {
    pub id: String,
    pub spec: ViewSpec,
    pub camera: Camera,
    pub width: usize,
    pub height: usize,
}

impl TargetView {
    pub fn from_spec(id: impl Into<String>, spec: ViewSpec, focal: f64, width: usize, height: usize) -> Result<Self> {
        let camera = camera_from_spec(&spec, focal, focal, width as f64 / 2.0, height as f64 / 2.0)?;
        Ok(Self { id: id.into(), spec, camera, width, height })
    }
}

/// An observed image used to condition multi-view predictions.
#[derive(Clone, Debug)]
pub struct ReferenceView {
    pub id: String,
    pub spec: ViewSpec,
    /// Pixel-domain RGB composited over the sampling background.
    pub image: Image,
}

/// Builds a noise predictor for one target view.
///
/// `reference` is set for view-conditioned sources; `lf` is the coarse render
/// of the target in the sampling domain, when one is available.
pub trait PriorSource: Send + Sync {
    fn bind(&self, target: &TargetView, reference: Option<&ReferenceView>, lf: Option<&Image>) -> Result<Box<dyn NoisePredictor>>;
}

struct Shared(Arc<dyn NoisePredictor>);

impl NoisePredictor for Shared {
    fn predict(&self, x_t: &Image, t: usize, sched: &NoiseSchedule) -> Result<Image> {
        self.0.predict(x_t, t, sched)
    }
}

/// The same predictor for every view.
#[derive(Clone)]
pub struct StaticPrior(pub Arc<dyn NoisePredictor>);

impl StaticPrior {
    pub fn null() -> Self {
        Self(Arc::new(NullPredictor))
    }
}

impl PriorSource for StaticPrior {
    fn bind(&self, _: &TargetView, _: Option<&ReferenceView>, _: Option<&Image>) -> Result<Box<dyn NoisePredictor>> {
        Ok(Box::new(Shared(self.0.clone())))
    }
}

/// Renders the current scene at the target view for the low-frequency prior.
#[derive(Clone, Debug)]
pub struct RenderPrior {
    pub cloud: Arc<GaussianCloud>,
    pub background: [f64; 3],
    pub options: RenderOptions,
    /// When set, renders through a camera pushed back by this factor with
    /// focal lengths scaled to match.
    pub far_field: Option<f64>,
}

impl RenderPrior {
    pub fn new(cloud: Arc<GaussianCloud>) -> Self {
        Self {
            cloud,
            background: [1.0; 3],
            options: RenderOptions::default(),
            far_field: None,
        }
    }

    /// Sampling-domain render of the target view.
    pub fn render(&self, target: &TargetView) -> Result<Image> {
        let cam = match self.far_field {
            Some(f) => far_field_adapt(&target.camera, f)?,
            None => target.camera.clone(),
        };
        render_prior_with(&self.cloud, &cam, target.width, target.height, self.background, &self.options)
    }
}

/// Render composited over `background`, mapped to the sampling domain.
pub fn render_prior_source(cloud: &GaussianCloud, cam: &Camera, width: usize, height: usize, background: [f64; 3]) -> Result<Image> {
    render_prior_with(cloud, cam, width, height, background, &RenderOptions::default())
}

fn render_prior_with(
    cloud: &GaussianCloud,
    cam: &Camera,
    width: usize,
    height: usize,
    background: [f64; 3],
    opts: &RenderOptions,
) -> Result<Image> {
    let out = render_with(cloud, cam, width, height, opts)?;
    Ok(out.color.composite_over(&out.alpha, background)?.to_sampling())
}

/// Signed azimuth difference `a - b` in `(-180, 180]`.
fn signed_delta(a: f64, b: f64) -> f64 {
    let d = wrap_degrees(a - b);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Multi-view stand-in built from a known scene.
///
/// Conditioned on a reference view, it predicts the noise of an isotropic
/// Gaussian centered on the scene rendered from a slightly wrong azimuth: the
/// error grows by `pose_drift` degrees per degree of separation between the
/// reference and the target. Predictions conditioned on different references
/// therefore disagree, as real multi-view models do.
#[derive(Clone, Debug)]
pub struct GroundTruthMvd {
    pub cloud: Arc<GaussianCloud>,
    pub background: [f64; 3],
    /// Standard deviation of the predicted image distribution (sampling domain).
    pub std: f64,
    pub pose_drift: f64,
}

impl GroundTruthMvd {
    pub fn new(cloud: Arc<GaussianCloud>) -> Self {
        Self {
            cloud,
            background: [1.0; 3],
            std: 0.05,
            pose_drift: 0.1,
        }
    }
}

impl PriorSource for GroundTruthMvd {
    fn bind(&self, target: &TargetView, reference: Option<&ReferenceView>, _: Option<&Image>) -> Result<Box<dyn NoisePredictor>> {
        let reference = reference.ok_or_else(|| Error::invalid("multi-view source needs a reference view"))?;
        let delta = signed_delta(target.spec.azimuth, reference.spec.azimuth);
        let mut spec = target.spec;
        spec.azimuth = wrap_degrees(spec.azimuth + self.pose_drift * delta);
        let c = &target.camera;
        let cam = camera_from_spec(&spec, c.fx, c.fy, c.cx, c.cy)?;
        let mean = render_prior_source(&self.cloud, &cam, target.width, target.height, self.background)?;
        Ok(Box::new(GaussianMixtureOracle::single(mean, self.std)?))
    }
}

/// High-frequency stand-in: a mixture over unsharp-masked versions of the
/// coarse render, so that the detail prior has a measurable effect.
#[derive(Clone, Debug)]
pub struct SharpenOracle {
    pub amounts: Vec<f64>,
    pub std: f64,
}

impl Default for SharpenOracle {
    fn default() -> Self {
        Self {
            amounts: vec![0.5, 1.0],
            std: 0.05,
        }
    }
}

/// `x + amount * (x - box3(x))`, per channel with clamped borders.
pub fn unsharp(img: &Image, amount: f64) -> Image {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut sum = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                        let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                        sum += img.get(sx, sy, c);
                    }
                }
                let v = img.get(x, y, c);
                out.set(x, y, c, v + amount * (v - sum / 9.0));
            }
        }
    }
    out
}

impl PriorSource for SharpenOracle {
    fn bind(&self, _: &TargetView, _: Option<&ReferenceView>, lf: Option<&Image>) -> Result<Box<dyn NoisePredictor>> {
        let Some(lf) = lf else {
            return Ok(Box::new(NullPredictor));
        };
        let means = self.amounts.iter().map(|&a| unsharp(lf, a).clamped(-1.0, 1.0)).collect();
        Ok(Box::new(GaussianMixtureOracle::uniform(means, self.std)?))
    }
}

/// Predictions from an external backend. Multi-view requests carry the
/// reference image and a `1x1x4` pose tensor `(target az, target el, ref az,
/// ref el)` in degrees; detail requests carry the coarse render when present.
#[derive(Clone, Debug)]
pub struct BridgeSource {
    pub client: Arc<BridgeClient>,
    pub kind: RequestKind,
}

impl PriorSource for BridgeSource {
    fn bind(&self, target: &TargetView, reference: Option<&ReferenceView>, lf: Option<&Image>) -> Result<Box<dyn NoisePredictor>> {
        let mut conditions = Vec::new();
        match self.kind {
            RequestKind::Mvd => {
                let r = reference.ok_or_else(|| Error::invalid("multi-view bridge needs a reference view"))?;
                conditions.push(Tensor::from_image(&r.image.to_sampling()));
                let pose = [target.spec.azimuth, target.spec.elevation, r.spec.azimuth, r.spec.elevation];
                conditions.push(Tensor::new(1, 1, 4, pose.map(|v| v as f32).to_vec())?);
            }
            RequestKind::Hf => conditions.extend(lf.map(Tensor::from_image)),
            RequestKind::Lpips => return Err(Error::invalid("perceptual requests are not noise predictors")),
        }
        Ok(Box::new(BridgePredictor {
            client: self.client.clone(),
            kind: self.kind,
            conditions,
        }))
    }
}

/// Everything the sampler draws on for one scene.
#[derive(Clone)]
pub struct PriorBundle {
    pub mvd: Arc<dyn PriorSource>,
    /// Conditioning views; at least one is required.
    pub references: Vec<ReferenceView>,
    pub lf: Option<RenderPrior>,
    pub hf: Option<Arc<dyn PriorSource>>,
    pub classifier: ViewClassifier,
}

impl PriorBundle {
    pub fn new(mvd: Arc<dyn PriorSource>, references: Vec<ReferenceView>) -> Self {
        Self {
            mvd,
            references,
            lf: None,
            hf: None,
            classifier: ViewClassifier::default(),
        }
    }

    /// Same bundle with the low-frequency source rendering `cloud`.
    pub fn with_lf_cloud(&self, cloud: Arc<GaussianCloud>) -> Self {
        let mut out = self.clone();
        out.lf = Some(match &self.lf {
            Some(prior) => RenderPrior { cloud, ..prior.clone() },
            None => RenderPrior::new(cloud),
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{lf_noise_from_render, ScheduleKind};
    use crate::splat::Gaussian3D;
    use crate::image::Domain;

    fn target(az: f64) -> TargetView {
        TargetView::from_spec("t", ViewSpec::new(az, 0.0, 3.0, [0.0; 3]).unwrap(), 20.0, 16, 16).unwrap()
    }

    fn cloud() -> Arc<GaussianCloud> {
        Arc::new(GaussianCloud::new(vec![Gaussian3D::isotropic([0.2, 0.5, 0.1], 0.3, 0.9, [0.9, 0.1, 0.1]).unwrap()]))
    }

    #[test]
    fn empty_cloud_renders_background() {
        let t = target(0.0);
        let img = render_prior_source(&GaussianCloud::default(), &t.camera, 16, 16, [1.0; 3]).unwrap();
        assert_eq!(img.domain(), Domain::Sampling);
        assert!(img.data().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn render_prior_gives_zero_lf_noise_on_its_own_signal() {
        let t = target(30.0);
        let x_lf = RenderPrior::new(cloud()).render(&t).unwrap();
        let sched = NoiseSchedule::new(50, ScheduleKind::LinearBeta).unwrap();
        let a = sched.alpha_bar(20).sqrt();
        let x_t = x_lf.map(|v| a * v);
        let eps = lf_noise_from_render(&x_t, &x_lf, 20, &sched).unwrap();
        assert!(eps.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn ground_truth_mvd_depends_on_reference() {
        let src = GroundTruthMvd { pose_drift: 0.5, ..GroundTruthMvd::new(cloud()) };
        let t = target(90.0);
        let sched = NoiseSchedule::new(50, ScheduleKind::LinearBeta).unwrap();
        let x = Image::zeros(16, 16, 3, Domain::Sampling);
        let refer = |az: f64| ReferenceView {
            id: format!("{az}"),
            spec: ViewSpec::new(az, 0.0, 3.0, [0.0; 3]).unwrap(),
            image: Image::zeros(16, 16, 3, Domain::Pixel),
        };
        let same = src.bind(&t, Some(&refer(90.0)), None).unwrap().predict(&x, 10, &sched).unwrap();
        let exact = GaussianMixtureOracle::single(RenderPrior::new(cloud()).render(&t).unwrap(), 0.05).unwrap();
        assert_eq!(same.data(), exact.predict(&x, 10, &sched).unwrap().data());
        let off = src.bind(&t, Some(&refer(0.0)), None).unwrap().predict(&x, 10, &sched).unwrap();
        assert_ne!(same.data(), off.data());
        assert!(src.bind(&t, None, None).is_err());
    }

    #[test]
    fn unsharp_keeps_constants() {
        let img = Image::filled(5, 4, 3, Domain::Sampling, 0.3);
        let out = unsharp(&img, 1.0);
        assert!(out.data().iter().all(|v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn signed_delta_range() {
        assert_eq!(signed_delta(10.0, 350.0), 20.0);
        assert_eq!(signed_delta(350.0, 10.0), -20.0);
        assert_eq!(signed_delta(180.0, 0.0), 180.0);
    }
}
