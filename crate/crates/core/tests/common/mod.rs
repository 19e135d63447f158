#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use zp3_core::splat::{Gaussian3D, GaussianCloud};
use zp3_core::views::{camera_from_spec, Camera, ViewSpec};

pub fn camera(azimuth: f64, elevation: f64, size: usize) -> Camera {
    let spec = ViewSpec::new(azimuth, elevation, 4.0, [0.0; 3]).unwrap();
    let f = size as f64 * 1.2;
    camera_from_spec(&spec, f, f, size as f64 / 2.0, size as f64 / 2.0).unwrap()
}

/// Random Gaussian inside a unit cube around the origin, with SH kept small
/// enough that colors stay inside `[0, 1]`.
pub fn random_gaussian(rng: &mut ChaCha8Rng, scale_range: (f64, f64)) -> Gaussian3D {
    let position = std::array::from_fn(|_| rng.random_range(-0.8..0.8));
    let scale = std::array::from_fn(|_| rng.random_range(scale_range.0..scale_range.1));
    let rotation = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let opacity = rng.random_range(0.2..0.9);
    let mut sh = [[0.0; 3]; 9];
    for (k, coeff) in sh.iter_mut().enumerate() {
        for c in coeff.iter_mut() {
            *c = if k == 0 { rng.random_range(-1.0..1.0) } else { rng.random_range(-0.1..0.1) };
        }
    }
    Gaussian3D::new(position, scale, rotation, opacity, sh).unwrap()
}

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, scale_range: (f64, f64)) -> GaussianCloud {
    (0..n).map(|_| random_gaussian(rng, scale_range)).collect()
}
