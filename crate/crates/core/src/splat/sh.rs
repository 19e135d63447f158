//! Real spherical harmonics up to degree 2.

use crate::math::Vec3;

use super::gaussian::SH_COEFFS;

pub const C0: f64 = 0.282_094_791_773_878_14;
pub const C1: f64 = 0.488_602_511_902_919_9;
pub const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];

/// DC coefficient that evaluates to `color` in every direction.
pub fn dc_from_color(color: f64) -> f64 {
    (color - 0.5) / C0
}

pub fn basis(d: Vec3) -> [f64; SH_COEFFS] {
    let [x, y, z] = d;
    [
        C0,
        -C1 * y,
        C1 * z,
        -C1 * x,
        C2[0] * x * y,
        C2[1] * y * z,
        C2[2] * (2.0 * z * z - x * x - y * y),
        C2[3] * x * z,
        C2[4] * (x * x - y * y),
    ]
}

/// `d basis_k / d dir`.
fn basis_jacobian(d: Vec3) -> [Vec3; SH_COEFFS] {
    let [x, y, z] = d;
    [
        [0.0; 3],
        [0.0, -C1, 0.0],
        [0.0, 0.0, C1],
        [-C1, 0.0, 0.0],
        [C2[0] * y, C2[0] * x, 0.0],
        [0.0, C2[1] * z, C2[1] * y],
        [-2.0 * C2[2] * x, -2.0 * C2[2] * y, 4.0 * C2[2] * z],
        [C2[3] * z, 0.0, C2[3] * x],
        [2.0 * C2[4] * x, -2.0 * C2[4] * y, 0.0],
    ]
}

/// RGB color seen along the unit direction `dir`, offset by 0.5 and clamped
/// to `[0, 1]`. The second value flags channels that were not clamped.
pub fn sh_eval_masked(sh: &[[f64; 3]; SH_COEFFS], dir: Vec3) -> ([f64; 3], [bool; 3]) {
    let b = basis(dir);
    let mut rgb = [0.5; 3];
    for (k, coeff) in sh.iter().enumerate() {
        for c in 0..3 {
            rgb[c] += b[k] * coeff[c];
        }
    }
    let live = rgb.map(|v| (0.0..=1.0).contains(&v));
    (rgb.map(|v| v.clamp(0.0, 1.0)), live)
}

pub fn sh_eval(sh: &[[f64; 3]; SH_COEFFS], dir: Vec3) -> [f64; 3] {
    sh_eval_masked(sh, dir).0
}

/// Gradients of the clamped color with respect to the coefficients and the
/// (unit) direction, given `dL/drgb`.
pub(crate) fn sh_backward(
    sh: &[[f64; 3]; SH_COEFFS],
    dir: Vec3,
    live: [bool; 3],
    d_rgb: [f64; 3],
) -> ([[f64; 3]; SH_COEFFS], Vec3) {
    let g: [f64; 3] = std::array::from_fn(|c| if live[c] { d_rgb[c] } else { 0.0 });
    let b = basis(dir);
    let jac = basis_jacobian(dir);
    let mut d_sh = [[0.0; 3]; SH_COEFFS];
    let mut d_dir = [0.0; 3];
    for k in 0..SH_COEFFS {
        let mut s = 0.0;
        for c in 0..3 {
            d_sh[k][c] = b[k] * g[c];
            s += sh[k][c] * g[c];
        }
        for i in 0..3 {
            d_dir[i] += jac[k][i] * s;
        }
    }
    (d_sh, d_dir)
}
