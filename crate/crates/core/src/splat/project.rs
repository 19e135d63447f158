//! EWA projection of 3D Gaussians to screen-space ellipses.

use crate::math::{self, Mat3, Vec3};
use crate::views::Camera;

use super::gaussian::{covariance, covariance_backward, Gaussian3D};
use super::render::RenderOptions;

/// A Gaussian's screen-space footprint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Splat2D {
    /// Pixel coordinates of the projected center.
    pub mean: [f64; 2],
    /// 2D covariance `(xx, xy, yy)` including the dilation term.
    pub cov: [f64; 3],
    /// Camera-space depth.
    pub depth: f64,
}

/// Everything the backward pass needs to revisit a projection.
#[derive(Clone, Debug)]
pub(crate) struct Geometry {
    pub t: Vec3,
    pub j: [[f64; 3]; 2],
    pub m: Mat3,
    pub clamped: [bool; 2],
    pub splat: Splat2D,
}

/// Projects `g` into an image of the given size, or `None` when it lies
/// closer than the near plane.
pub fn project(g: &Gaussian3D, cam: &Camera, width: usize, height: usize) -> Option<Splat2D> {
    geometry(g, cam, width, height, &RenderOptions::default()).map(|geo| geo.splat)
}

pub(crate) fn geometry(g: &Gaussian3D, cam: &Camera, width: usize, height: usize, opts: &RenderOptions) -> Option<Geometry> {
    let t = cam.world_to_camera(g.position);
    let tz = t[2];
    if !(tz > opts.near) {
        return None;
    }
    // Keep the affine approximation sane for Gaussians far outside the view.
    let lim_x = 1.3 * 0.5 * width as f64 / cam.fx;
    let lim_y = 1.3 * 0.5 * height as f64 / cam.fy;
    let rx = t[0] / tz;
    let ry = t[1] / tz;
    let clamped = [rx.abs() > lim_x, ry.abs() > lim_y];
    let txc = rx.clamp(-lim_x, lim_x) * tz;
    let tyc = ry.clamp(-lim_y, lim_y) * tz;
    let j = [
        [cam.fx / tz, 0.0, -cam.fx * txc / (tz * tz)],
        [0.0, cam.fy / tz, -cam.fy * tyc / (tz * tz)],
    ];
    let w = &cam.rotation;
    let m = math::mat_mul(&math::mat_mul(w, &covariance(g)), &math::transpose(w));
    let mut jm = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            jm[r][c] = (0..3).map(|k| j[r][k] * m[k][c]).sum();
        }
    }
    let entry = |a: usize, b: usize| (0..3).map(|k| jm[a][k] * j[b][k]).sum::<f64>();
    let cov = [entry(0, 0) + opts.dilation, entry(0, 1), entry(1, 1) + opts.dilation];
    let mean = [cam.fx * t[0] / tz + cam.cx, cam.fy * t[1] / tz + cam.cy];
    Some(Geometry {
        t,
        j,
        m,
        clamped,
        splat: Splat2D { mean, cov, depth: tz },
    })
}

/// Inverse of a symmetric 2x2 matrix `(xx, xy, yy)`, or `None` if singular.
pub(crate) fn conic(cov: [f64; 3]) -> Option<[f64; 3]> {
    let det = cov[0] * cov[2] - cov[1] * cov[1];
    if !(det > 0.0) {
        return None;
    }
    Some([cov[2] / det, -cov[1] / det, cov[0] / det])
}

/// Gradients reaching position, log-scale and raw quaternion from
/// `dL/dmean` and `dL/dcov2d` (full-matrix convention).
pub(crate) fn geometry_backward(
    g: &Gaussian3D,
    cam: &Camera,
    geo: &Geometry,
    d_mean: [f64; 2],
    d_cov: [[f64; 2]; 2],
) -> (Vec3, Vec3, [f64; 4]) {
    let [tx, ty, tz] = geo.t;
    let j = &geo.j;
    let m = &geo.m;

    // dL/dM = J^T G J
    let mut d_m = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let mut s = 0.0;
            for r in 0..2 {
                for c in 0..2 {
                    s += j[r][a] * d_cov[r][c] * j[c][b];
                }
            }
            d_m[a][b] = s;
        }
    }
    // dL/dJ = 2 G J M
    let mut gj = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            gj[r][c] = (0..2).map(|k| d_cov[r][k] * j[k][c]).sum();
        }
    }
    let mut d_j = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            d_j[r][c] = 2.0 * (0..3).map(|k| gj[r][k] * m[k][c]).sum::<f64>();
        }
    }

    let (fx, fy) = (cam.fx, cam.fy);
    let tz2 = tz * tz;
    let tz3 = tz2 * tz;
    let mut d_t = [0.0; 3];
    d_t[0] += d_mean[0] * fx / tz;
    d_t[1] += d_mean[1] * fy / tz;
    d_t[2] -= d_mean[0] * fx * tx / tz2 + d_mean[1] * fy * ty / tz2;

    d_t[2] -= d_j[0][0] * fx / tz2 + d_j[1][1] * fy / tz2;
    let txc = -j[0][2] * tz2 / fx;
    let tyc = -j[1][2] * tz2 / fy;
    if geo.clamped[0] {
        d_t[2] += d_j[0][2] * fx * txc / tz3;
    } else {
        d_t[0] -= d_j[0][2] * fx / tz2;
        d_t[2] += d_j[0][2] * 2.0 * fx * txc / tz3;
    }
    if geo.clamped[1] {
        d_t[2] += d_j[1][2] * fy * tyc / tz3;
    } else {
        d_t[1] -= d_j[1][2] * fy / tz2;
        d_t[2] += d_j[1][2] * 2.0 * fy * tyc / tz3;
    }

    let w = &cam.rotation;
    let wt = math::transpose(w);
    let d_sigma = math::mat_mul(&math::mat_mul(&wt, &d_m), w);
    let (d_log_scale, d_rot) = covariance_backward(g, &d_sigma);
    (math::mat_vec(&wt, d_t), d_log_scale, d_rot)
}
