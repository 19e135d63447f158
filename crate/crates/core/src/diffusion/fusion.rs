//! Per-step noise construction: multi-view fusion, the rendering prior, the
//! time-dependent prior weights and the update rules that consume them.

use serde::{Deserialize, Serialize};

use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::image::LatentImage;

/// Parameters of the `tanh` hand-off between the low- and high-frequency priors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionWeights {
    /// Transition step.
    pub tau: f64,
    /// Width of the transition; must be positive.
    pub sigma: f64,
    /// Divisor applied to the high-frequency weight; must be positive.
    pub eta: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self {
            tau: 22.0,
            sigma: 7.0,
            eta: 4.0,
        }
    }
}

impl FusionWeights {
    pub fn new(tau: f64, sigma: f64, eta: f64) -> Result<Self> {
        let w = Self { tau, sigma, eta };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !(self.eta > 0.0) || !self.tau.is_finite() {
            return Err(Error::invalid(format!(
                "fusion weights need finite tau and positive sigma/eta, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// `(w_lf, w_hf)` at step `t`.
///
/// `w_lf = (tanh(-(t - tau) / sigma) + 1) / 2` and `w_hf = (1 - w_lf) / eta`.
pub fn schedule_weights(t: f64, w: &FusionWeights) -> (f64, f64) {
    let w_lf = 0.5 * ((-(t - w.tau) / w.sigma).tanh() + 1.0);
    let w_hf = (1.0 - w_lf) / w.eta;
    (w_lf, w_hf)
}

/// One view-conditioned noise prediction and its fusion weight.
#[derive(Clone, Debug)]
pub struct ViewPrediction {
    pub noise: LatentImage,
    pub weight: f64,
    pub source_view_id: String,
}

/// Weighted sum of view-conditioned predictions.
///
/// With `normalize` the weights are rescaled to sum to one, which keeps the
/// result inside the per-pixel convex hull of the inputs.
pub fn fuse_mvd(predictions: &[ViewPrediction], normalize: bool) -> Result<LatentImage> {
    let first = predictions
        .first()
        .ok_or_else(|| Error::invalid("fuse_mvd needs at least one prediction"))?;
    for p in predictions {
        p.noise.ensure_same_shape(&first.noise, "fuse_mvd")?;
        if !(p.weight > 0.0) {
            return Err(Error::invalid(format!(
                "view {} has non-positive weight {}",
                p.source_view_id, p.weight
            )));
        }
    }
    let total: f64 = predictions.iter().map(|p| p.weight).sum();
    let scale = if normalize { 1.0 / total } else { 1.0 };

    let mut out = first.noise.filled_like(0.0);
    for p in predictions {
        let w = p.weight * scale;
        for (o, v) in out.data_mut().iter_mut().zip(p.noise.data()) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Noise that would take the coarse render `x_lf` to `x_t` at step `t`:
/// `(x_t - sqrt(alpha_bar_t) x_lf) / sqrt(1 - alpha_bar_t)`.
pub fn lf_noise_from_render(
    x_t: &LatentImage,
    x_lf: &LatentImage,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<LatentImage> {
    x_t.ensure_same_shape(x_lf, "lf_noise_from_render")?;
    let noise_level = sched.noise_level(t)?;
    let signal = sched.alpha_bar(t).sqrt();
    x_t.zip_map(x_lf, |x, r| (x - signal * r) / noise_level)
}

/// `eps_mvd + w_hf * eps_hf + w_lf * eps_lf` with explicit weights.
pub fn fuse_noise_weighted(
    eps_mvd: &LatentImage,
    eps_hf: &LatentImage,
    eps_lf: &LatentImage,
    w_lf: f64,
    w_hf: f64,
) -> Result<LatentImage> {
    eps_mvd.ensure_same_shape(eps_hf, "fuse_noise (hf)")?;
    eps_mvd.ensure_same_shape(eps_lf, "fuse_noise (lf)")?;
    let mut out = eps_mvd.clone();
    for ((o, h), l) in out.data_mut().iter_mut().zip(eps_hf.data()).zip(eps_lf.data()) {
        *o += w_hf * h + w_lf * l;
    }
    Ok(out)
}

/// Additive fusion of the multi-view prediction with both priors, weighted by
/// [`schedule_weights`] at step `t`. No renormalization is applied.
pub fn fuse_noise(
    eps_mvd: &LatentImage,
    eps_hf: &LatentImage,
    eps_lf: &LatentImage,
    t: f64,
    w: &FusionWeights,
) -> Result<LatentImage> {
    let (w_lf, w_hf) = schedule_weights(t, w);
    fuse_noise_weighted(eps_mvd, eps_hf, eps_lf, w_lf, w_hf)
}

/// The simplified update `x + (sqrt(a_prev) - sqrt(a_t)) * eps / sqrt(1 - a_t)`.
///
/// Kept verbatim for reference and comparison. The coefficient is positive, so
/// this moves *along* the predicted noise; the sampler defaults to
/// [`ddim_step_canonical`].
pub fn ddim_step(
    x_t: &LatentImage,
    eps_t: &LatentImage,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<LatentImage> {
    x_t.ensure_same_shape(eps_t, "ddim_step")?;
    if t == 0 {
        return Err(Error::invalid("ddim_step needs t >= 1"));
    }
    let noise_level = sched.noise_level(t)?;
    let coef = (sched.alpha_bar(t - 1).sqrt() - sched.alpha_bar(t).sqrt()) / noise_level;
    x_t.zip_map(eps_t, |x, e| x + coef * e)
}

/// Result of one canonical DDIM step, split into its deterministic part and
/// the injected noise (`sigma_t * z`, absent when `eta = 0`).
#[derive(Clone, Debug)]
pub struct DdimStep {
    pub mean: LatentImage,
    pub noise: Option<LatentImage>,
}

impl DdimStep {
    pub fn sample(&self) -> LatentImage {
        match &self.noise {
            Some(n) => self.mean.zip_map(n, |m, v| m + v).expect("same shape"),
            None => self.mean.clone(),
        }
    }
}

/// Standard DDIM stochasticity `sigma_t` for stepping from `t` to `t - 1`.
pub fn ddim_sigma(sched: &NoiseSchedule, t: usize, eta: f64) -> f64 {
    if eta == 0.0 {
        return 0.0;
    }
    let a = sched.alpha_bar(t);
    let a_prev = sched.alpha_bar(t - 1);
    eta * ((1.0 - a_prev) / (1.0 - a)).sqrt() * (1.0 - a / a_prev).sqrt()
}

/// Standard DDIM update through the implied clean image
/// `x0 = (x_t - sqrt(1 - a_t) eps) / sqrt(a_t)`.
///
/// `z` supplies the standard-normal draw used when `eta > 0`.
pub fn ddim_step_canonical(
    x_t: &LatentImage,
    eps_t: &LatentImage,
    t: usize,
    sched: &NoiseSchedule,
    eta: f64,
    z: Option<&LatentImage>,
) -> Result<DdimStep> {
    x_t.ensure_same_shape(eps_t, "ddim_step_canonical")?;
    if t == 0 {
        return Err(Error::invalid("ddim_step_canonical needs t >= 1"));
    }
    let noise_level = sched.noise_level(t)?;
    let a = sched.alpha_bar(t);
    let a_prev = sched.alpha_bar(t - 1);
    let sigma = ddim_sigma(sched, t, eta);
    let dir = (1.0 - a_prev - sigma * sigma).max(0.0).sqrt();
    let mean = x_t.zip_map(eps_t, |x, e| {
        let x0 = (x - noise_level * e) / a.sqrt();
        a_prev.sqrt() * x0 + dir * e
    })?;
    let noise = match (sigma > 0.0, z) {
        (false, _) => None,
        (true, Some(z)) => {
            z.ensure_same_shape(x_t, "ddim noise draw")?;
            Some(z.map(|v| sigma * v))
        }
        (true, None) => return Err(Error::invalid("stochastic DDIM step needs a noise draw")),
    };
    Ok(DdimStep { mean, noise })
}

/// Per-channel rescaling of the stochastic component so that the fused sample
/// keeps the variance of the unfused one.
///
/// `x_avg` is the fused sample *including* `noise_term`; the returned image is
/// `(x_avg - noise_term) + lambda_c * noise_term`. A negative numerator is
/// clamped to zero before the square root.
pub fn variance_compensate(
    x_orig: &LatentImage,
    x_avg: &LatentImage,
    noise_term: &LatentImage,
    delta: f64,
) -> Result<(Vec<f64>, LatentImage)> {
    x_orig.ensure_same_shape(x_avg, "variance_compensate")?;
    x_orig.ensure_same_shape(noise_term, "variance_compensate")?;
    if !(delta > 0.0) {
        return Err(Error::invalid("variance_compensate needs delta > 0"));
    }
    let channels = x_avg.channels();
    let lambdas: Vec<f64> = (0..channels)
        .map(|c| {
            let var_noise = noise_term.channel_variance(c);
            let numerator =
                (x_orig.channel_variance(c) - x_avg.channel_variance(c) + var_noise).max(0.0);
            (numerator / (var_noise + delta)).sqrt()
        })
        .collect();

    let mut adjusted = x_avg.clone();
    for (i, (v, n)) in adjusted
        .data_mut()
        .iter_mut()
        .zip(noise_term.data())
        .enumerate()
    {
        let lambda = lambdas[i % channels];
        *v += (lambda - 1.0) * n;
    }
    Ok((lambdas, adjusted))
}
