//! Procedural toy scenes: a Gaussian-cluster object whose color varies with
//! azimuth, rendered to observations at arbitrary viewpoints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reconstruct::Observation;
use crate::splat::{render_with, Gaussian3D, GaussianCloud, RenderOptions};
use crate::views::{camera_from_spec, ViewSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyParams {
    pub clusters: usize,
    pub per_cluster: usize,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub radius: f64,
    pub background: [f64; 3],
}

impl Default for ToyParams {
    fn default() -> Self {
        Self {
            clusters: 7,
            per_cluster: 48,
            width: 64,
            height: 64,
            focal: 80.0,
            radius: 3.0,
            background: [1.0; 3],
        }
    }
}

fn hue(angle: f64) -> [f64; 3] {
    let h = angle.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU * 6.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as usize {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [0.15 + 0.7 * r, 0.15 + 0.7 * g, 0.15 + 0.7 * b]
}

/// An object made of a central body and satellite clusters, colored by a hue
/// wheel around the vertical axis.
pub fn toy_object(params: &ToyParams, seed: u64) -> Result<GaussianCloud> {
    if params.clusters == 0 || params.per_cluster == 0 {
        return Err(Error::invalid("toy object needs at least one cluster and one point per cluster"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let mut gaussians = Vec::with_capacity(params.clusters * params.per_cluster);
    for k in 0..params.clusters {
        let (center, spread) = if k == 0 {
            ([0.0, 0.0, 0.0], [0.35, 0.35, 0.45])
        } else {
            let a = std::f64::consts::TAU * (k as f64 - 1.0 + rng.random::<f64>() * 0.5) / (params.clusters - 1) as f64;
            let z = rng.random_range(-0.35..0.35);
            ([0.5 * a.cos(), 0.5 * a.sin(), z], [0.14, 0.14, 0.14])
        };
        for _ in 0..params.per_cluster {
            let p = std::array::from_fn(|i| center[i] + spread[i] * unit.sample(&mut rng));
            let angle = f64::atan2(p[1], p[0]);
            let shade = 0.85 + 0.15 * (p[2] * 3.0).tanh();
            let rgb = hue(angle).map(|c| (c * shade).clamp(0.0, 1.0));
            let scale = rng.random_range(0.05..0.1);
            gaussians.push(Gaussian3D::isotropic(p, scale, 0.9, rgb)?);
        }
    }
    Ok(GaussianCloud::new(gaussians))
}

/// Renders `cloud` from `spec`; the mask marks pixels with accumulated
/// opacity above one half.
pub fn render_observation(cloud: &GaussianCloud, spec: ViewSpec, params: &ToyParams) -> Result<Observation> {
    let (w, h) = (params.width, params.height);
    let camera = camera_from_spec(&spec, params.focal, params.focal, w as f64 / 2.0, h as f64 / 2.0)?;
    let out = render_with(cloud, &camera, w, h, &RenderOptions::default())?;
    let image = out.color.composite_over(&out.alpha, params.background)?.clamped(0.0, 1.0);
    let mask = out.alpha.map(|a| if a > 0.5 { 1.0 } else { 0.0 });
    Observation::new(image, mask, camera, spec)
}

/// Viewpoints on a regular azimuth grid over `[start, end]` at each elevation.
pub fn view_grid(start: f64, end: f64, step: f64, elevations: &[f64], radius: f64) -> Result<Vec<ViewSpec>> {
    if !(step > 0.0) || !(end >= start) {
        return Err(Error::invalid("view grid needs step > 0 and end >= start"));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    let mut out = Vec::new();
    for &el in elevations {
        for i in 0..count {
            out.push(ViewSpec::new(start + i as f64 * step, el, radius, [0.0; 3])?);
        }
    }
    Ok(out)
}

/// Everything needed for a paired experiment on one toy object.
#[derive(Clone, Debug)]
pub struct ToyScene {
    pub params: ToyParams,
    pub cloud: GaussianCloud,
    pub observed_range: (f64, f64),
    pub observations: Vec<Observation>,
    pub ground_truth: Vec<Observation>,
}

/// Observations every 15 degrees over `observed_range` at elevations
/// `{-30, 0, 30}`, ground truth every 30 degrees around the full circle at
/// elevations `{0, 20}`.
pub fn toy_scene(params: &ToyParams, observed_range: (f64, f64), seed: u64) -> Result<ToyScene> {
    let cloud = toy_object(params, seed)?;
    let observations = view_grid(observed_range.0, observed_range.1, 15.0, &[-30.0, 0.0, 30.0], params.radius)?
        .into_iter()
        .map(|s| render_observation(&cloud, s, params))
        .collect::<Result<Vec<_>>>()?;
    let ground_truth = view_grid(0.0, 330.0, 30.0, &[0.0, 20.0], params.radius)?
        .into_iter()
        .map(|s| render_observation(&cloud, s, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(ToyScene { params: params.clone(), cloud, observed_range, observations, ground_truth })
}
