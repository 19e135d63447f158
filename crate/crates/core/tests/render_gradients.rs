mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zp3_core::image::{Domain, Image};
use zp3_core::splat::{layout, render_backward, render_forward, render_with, Gaussian3D, GaussianCloud, RenderOptions};
use zp3_core::views::Camera;

const SIZE: usize = 16;

struct Upstream {
    color: Image,
    alpha: Image,
}

fn random_upstream(rng: &mut ChaCha8Rng) -> Upstream {
    let color = (0..SIZE * SIZE * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let alpha = (0..SIZE * SIZE).map(|_| rng.random_range(-1.0..1.0)).collect();
    Upstream {
        color: Image::from_vec(SIZE, SIZE, 3, Domain::Pixel, color).unwrap(),
        alpha: Image::from_vec(SIZE, SIZE, 1, Domain::Pixel, alpha).unwrap(),
    }
}

fn loss(cloud: &GaussianCloud, cam: &Camera, up: &Upstream) -> f64 {
    let out = render_with(cloud, cam, SIZE, SIZE, &RenderOptions::smooth()).unwrap();
    let c: f64 = out.color.data().iter().zip(up.color.data()).map(|(a, b)| a * b).sum();
    let a: f64 = out.alpha.data().iter().zip(up.alpha.data()).map(|(a, b)| a * b).sum();
    c + a
}

fn perturbed(cloud: &GaussianCloud, g: usize, p: usize, h: f64) -> GaussianCloud {
    let mut out = cloud.clone();
    let mut params = out.gaussians[g].to_params();
    params[p] += h;
    out.gaussians[g] = Gaussian3D::from_params(&params);
    out
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Checks every parameter of every Gaussian against central differences.
fn check_scene(cloud: &GaussianCloud, cam: &Camera, up: &Upstream) -> (f64, f64) {
    let (_, ctx) = render_forward(cloud, cam, SIZE, SIZE, &RenderOptions::smooth()).unwrap();
    let grads = render_backward(cloud, cam, &ctx, &up.color, Some(&up.alpha)).unwrap();
    let (mut worst_nonlinear, mut worst_linear): (f64, f64) = (0.0, 0.0);
    for g in 0..cloud.len() {
        for p in 0..38 {
            let h = 1e-4;
            let fd = (loss(&perturbed(cloud, g, p, h), cam, up) - loss(&perturbed(cloud, g, p, -h), cam, up)) / (2.0 * h);
            let err = rel_err(grads.params[g][p], fd);
            if p >= layout::SH || p == layout::OPACITY {
                worst_linear = worst_linear.max(err);
            } else {
                worst_nonlinear = worst_nonlinear.max(err);
            }
        }
    }
    (worst_nonlinear, worst_linear)
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut nonlinear, mut linear): (f64, f64) = (0.0, 0.0);
    for scene in 0..50 {
        let n = rng.random_range(1..=3);
        let cloud = common::random_cloud(&mut rng, n, (0.1, 0.4));
        let cam = common::camera(rng.random_range(0.0..360.0), rng.random_range(-40.0..40.0), SIZE);
        let up = random_upstream(&mut rng);
        let (a, b) = check_scene(&cloud, &cam, &up);
        assert!(a <= 1e-2, "scene {scene}: geometric gradient error {a}");
        assert!(b <= 1e-3, "scene {scene}: opacity/SH gradient error {b}");
        nonlinear = nonlinear.max(a);
        linear = linear.max(b);
    }
    eprintln!("worst relative error: geometry {nonlinear:.2e}, opacity/SH {linear:.2e}");
}

#[test]
fn opacity_gradient_at_center_pixel() {
    let cam = common::camera(0.0, 0.0, SIZE);
    let g = Gaussian3D::isotropic(cam.unproject(8.5, 8.5, 4.0), 0.3, 0.6, [0.8, 0.4, 0.2]).unwrap();
    let cloud = GaussianCloud::new(vec![g]);
    let mut color = Image::zeros(SIZE, SIZE, 3, Domain::Pixel);
    color.set(8, 8, 0, 1.0);
    let up = Upstream { color, alpha: Image::zeros(SIZE, SIZE, 1, Domain::Pixel) };
    let (_, ctx) = render_forward(&cloud, &cam, SIZE, SIZE, &RenderOptions::smooth()).unwrap();
    let grads = render_backward(&cloud, &cam, &ctx, &up.color, None).unwrap();
    let h = 1e-4;
    let p = layout::OPACITY;
    let fd = (loss(&perturbed(&cloud, 0, p, h), &cam, &up) - loss(&perturbed(&cloud, 0, p, -h), &cam, &up)) / (2.0 * h);
    assert!(rel_err(grads.params[0][p], fd) < 1e-3);
}

#[test]
fn off_center_position_gradient() {
    let cam = common::camera(30.0, 10.0, SIZE);
    let g = Gaussian3D::isotropic(cam.unproject(5.2, 10.7, 3.8), 0.25, 0.7, [0.3, 0.6, 0.9]).unwrap();
    let cloud = GaussianCloud::new(vec![g]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let up = random_upstream(&mut rng);
    let (_, ctx) = render_forward(&cloud, &cam, SIZE, SIZE, &RenderOptions::smooth()).unwrap();
    let grads = render_backward(&cloud, &cam, &ctx, &up.color, Some(&up.alpha)).unwrap();
    let h = 1e-4;
    let fd = (loss(&perturbed(&cloud, 0, 0, h), &cam, &up) - loss(&perturbed(&cloud, 0, 0, -h), &cam, &up)) / (2.0 * h);
    assert!(rel_err(grads.params[0][0], fd) < 1e-2);
}
