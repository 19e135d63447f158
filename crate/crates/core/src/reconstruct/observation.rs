use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::math;
use crate::splat::sh::dc_from_color;
use crate::splat::{Gaussian3D, GaussianCloud, SH_COEFFS};
use crate::views::{Camera, ViewSpec};

/// One captured view: a pixel-domain image, its binary foreground mask and
/// the camera it was taken from.
#[derive(Clone, Debug)]
pub struct Observation {
    pub image: Image,
    /// Single channel, values in `{0, 1}`.
    pub mask: Image,
    pub camera: Camera,
    pub view_spec: ViewSpec,
}

impl Observation {
    pub fn new(image: Image, mask: Image, camera: Camera, view_spec: ViewSpec) -> Result<Self> {
        let obs = Self { image, mask, camera, view_spec };
        obs.validate()?;
        Ok(obs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image.channels() != 3 {
            return Err(Error::invalid("observation image must have 3 channels"));
        }
        if self.mask.channels() != 1
            || self.mask.width() != self.image.width()
            || self.mask.height() != self.image.height()
        {
            return Err(Error::invalid("mask must be single-channel and match the image size"));
        }
        if self.mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::invalid("mask values must be 0 or 1"));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn foreground_count(&self) -> usize {
        self.mask.data().iter().filter(|&&m| m > 0.5).count()
    }

    fn covers(&self, p: math::Vec3) -> bool {
        let Some([u, v]) = self.camera.project_point(p) else {
            return false;
        };
        if !(u >= 0.0 && v >= 0.0 && u < self.width() as f64 && v < self.height() as f64) {
            return false;
        }
        self.mask.get(u as usize, v as usize, 0) > 0.5
    }
}

const DEPTH_SAMPLES: usize = 64;

// Midpoint of the stretch of the ray that every other view sees as foreground,
// or the focus depth when no sample qualifies.
fn hull_mid_depth(obs: &[Observation], source: usize, u: f64, v: f64) -> f64 {
    let cam = &obs[source].camera;
    let focus = cam.focus_distance;
    let (near, far) = (0.2 * focus, 1.8 * focus);
    let mut first = None;
    let mut last = None;
    for k in 0..DEPTH_SAMPLES {
        let d = near + (far - near) * (k as f64 + 0.5) / DEPTH_SAMPLES as f64;
        let p = cam.unproject(u, v, d);
        if obs.iter().enumerate().all(|(j, o)| j == source || o.covers(p)) {
            first.get_or_insert(d);
            last = Some(d);
        }
    }
    match (first, last) {
        (Some(a), Some(b)) => 0.5 * (a + b),
        _ => focus,
    }
}

/// Seeds a cloud by back-projecting random foreground pixels.
///
/// Each seed takes the color of its source pixel, an isotropic scale equal to
/// the mean distance to its three nearest neighbours, and opacity 0.1.
pub fn init_cloud(observations: &[Observation], n_points: usize, seed: u64) -> Result<GaussianCloud> {
    if observations.is_empty() {
        return Err(Error::invalid("init_cloud needs at least one observation"));
    }
    if n_points == 0 {
        return Err(Error::invalid("init_cloud needs n_points >= 1"));
    }
    for o in observations {
        o.validate()?;
    }
    let foreground: Vec<Vec<(usize, usize)>> = observations
        .iter()
        .map(|o| {
            (0..o.height())
                .flat_map(|y| (0..o.width()).map(move |x| (x, y)))
                .filter(|&(x, y)| o.mask.get(x, y, 0) > 0.5)
                .collect()
        })
        .collect();
    let sources: Vec<usize> = (0..observations.len()).filter(|&i| !foreground[i].is_empty()).collect();
    if sources.is_empty() {
        return Err(Error::invalid("all observation masks are empty"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seeds = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let i = sources[rng.random_range(0..sources.len())];
        let (x, y) = foreground[i][rng.random_range(0..foreground[i].len())];
        let (u, v) = (x as f64 + rng.random::<f64>(), y as f64 + rng.random::<f64>());
        let depth = hull_mid_depth(observations, i, u, v);
        let pos = observations[i].camera.unproject(u, v, depth);
        let img = &observations[i].image;
        let rgb = [img.get(x, y, 0), img.get(x, y, 1), img.get(x, y, 2)];
        seeds.push((pos, rgb));
    }

    let fallback = observations[sources[0]].camera.focus_distance * 0.01;
    let gaussians = seeds
        .iter()
        .enumerate()
        .map(|(i, &(pos, rgb))| {
            let mut nearest = [f64::INFINITY; 3];
            for (j, &(q, _)) in seeds.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = math::norm(math::sub(pos, q));
                if d < nearest[2] {
                    nearest[2] = d;
                    nearest.sort_by(f64::total_cmp);
                }
            }
            let found: Vec<f64> = nearest.into_iter().filter(|d| d.is_finite() && *d > 0.0).collect();
            let scale = if found.is_empty() { fallback } else { found.iter().sum::<f64>() / found.len() as f64 };
            let mut sh = [[0.0; 3]; SH_COEFFS];
            sh[0] = rgb.map(dc_from_color);
            Gaussian3D::new(pos, [scale; 3], [1.0, 0.0, 0.0, 0.0], 0.1, sh)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GaussianCloud::new(gaussians))
}
