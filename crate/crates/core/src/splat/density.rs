//! Adaptive density control: cloning, splitting and pruning.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

use super::gaussian::GaussianCloud;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensifyOptions {
    /// Mean screen-space gradient norm above which a Gaussian is densified.
    pub grad_threshold: f64,
    /// Gaussians whose largest scale is at most this fraction of the scene
    /// extent are cloned; larger ones are split.
    pub clone_fraction: f64,
    /// Scale divisor applied to split children.
    pub split_factor: f64,
    pub split_count: usize,
}

impl Default for DensifyOptions {
    fn default() -> Self {
        Self {
            grad_threshold: 2e-4,
            clone_fraction: 0.01,
            split_factor: 1.6,
            split_count: 2,
        }
    }
}

/// Densifies `cloud` and reports, for each output Gaussian, the index of the
/// input Gaussian it came from.
///
/// Survivors keep their relative order, followed by clones and then split
/// children.
pub fn densify_indexed<R: Rng + ?Sized>(
    cloud: &GaussianCloud,
    grad_stats: &[f64],
    scene_extent: f64,
    opts: &DensifyOptions,
    rng: &mut R,
) -> Result<(GaussianCloud, Vec<usize>)> {
    if grad_stats.len() != cloud.len() {
        return Err(Error::invalid(format!(
            "{} gradient statistics for {} gaussians",
            grad_stats.len(),
            cloud.len()
        )));
    }
    if !(opts.split_factor > 0.0) || opts.split_count == 0 {
        return Err(Error::invalid("split factor and count must be positive"));
    }
    let limit = opts.clone_fraction * scene_extent;
    let mut kept = Vec::new();
    let mut clones = Vec::new();
    let mut split = Vec::new();
    for (i, g) in cloud.gaussians.iter().enumerate() {
        if !(grad_stats[i] > opts.grad_threshold) {
            kept.push(i);
        } else if g.scale().into_iter().fold(0.0, f64::max) <= limit {
            kept.push(i);
            clones.push(i);
        } else {
            split.push(i);
        }
    }

    let mut out: Vec<_> = kept.iter().map(|&i| cloud.gaussians[i].clone()).collect();
    let mut origin = kept;
    for &i in &clones {
        out.push(cloud.gaussians[i].clone());
        origin.push(i);
    }
    let shrink = opts.split_factor.ln();
    for &i in &split {
        let g = &cloud.gaussians[i];
        let r = g.rotation_matrix();
        let s = g.scale();
        for _ in 0..opts.split_count {
            let z: [f64; 3] = std::array::from_fn(|k| s[k] * rng.sample::<f64, _>(StandardNormal));
            let mut child = g.clone();
            child.position = math::add(g.position, math::mat_vec(&r, z));
            child.log_scale = g.log_scale.map(|v| v - shrink);
            out.push(child);
            origin.push(i);
        }
    }
    Ok((GaussianCloud::new(out), origin))
}

pub fn densify<R: Rng + ?Sized>(
    cloud: &GaussianCloud,
    grad_stats: &[f64],
    scene_extent: f64,
    opts: &DensifyOptions,
    rng: &mut R,
) -> Result<GaussianCloud> {
    densify_indexed(cloud, grad_stats, scene_extent, opts, rng).map(|(c, _)| c)
}

/// Removes Gaussians with opacity below `threshold`, returning the indices of
/// the survivors.
pub fn prune_indexed(cloud: &GaussianCloud, threshold: f64) -> Result<(GaussianCloud, Vec<usize>)> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::invalid(format!("prune threshold {threshold} outside [0, 1)")));
    }
    let kept: Vec<usize> = (0..cloud.len()).filter(|&i| cloud.gaussians[i].opacity() >= threshold).collect();
    let out = kept.iter().map(|&i| cloud.gaussians[i].clone()).collect();
    Ok((out, kept))
}

pub fn prune(cloud: &GaussianCloud, threshold: f64) -> Result<GaussianCloud> {
    prune_indexed(cloud, threshold).map(|(c, _)| c)
}
