use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Mat3, Vec3};

/// Number of real parameters per Gaussian in the flat layout used by the
/// optimizer and gradients.
pub const PARAM_COUNT: usize = 38;
/// Number of SH coefficients per color channel (degrees 0 to 2).
pub const SH_COEFFS: usize = 9;

/// Offsets into the flat parameter layout.
pub mod layout {
    pub const POSITION: usize = 0;
    pub const LOG_SCALE: usize = 3;
    pub const ROTATION: usize = 6;
    pub const OPACITY: usize = 10;
    pub const SH: usize = 11;
    /// First non-DC SH entry.
    pub const SH_REST: usize = 14;
}

pub type Params = [f64; PARAM_COUNT];

/// One anisotropic Gaussian, stored in unconstrained form.
///
/// Scales are kept as logarithms and opacity as a logit; the quaternion is
/// `(w, x, y, z)` and is normalized wherever it is turned into a rotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian3D {
    pub position: Vec3,
    pub log_scale: Vec3,
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    /// `sh[k][c]`: coefficient `k` of channel `c`.
    pub sh: [[f64; 3]; SH_COEFFS],
}

impl Gaussian3D {
    /// Builds a Gaussian from constrained values, checking the invariants.
    pub fn new(position: Vec3, scale: Vec3, rotation: [f64; 4], opacity: f64, sh: [[f64; 3]; SH_COEFFS]) -> Result<Self> {
        if scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!("scales must be positive, got {scale:?}")));
        }
        if !(opacity > 0.0 && opacity < 1.0) {
            return Err(Error::invalid(format!("opacity must lie in (0, 1), got {opacity}")));
        }
        let n = quat_norm(rotation);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::invalid("rotation quaternion must be non-zero"));
        }
        Ok(Self {
            position,
            log_scale: scale.map(f64::ln),
            rotation: rotation.map(|v| v / n),
            opacity_logit: math::logit(opacity),
            sh,
        })
    }

    /// Isotropic Gaussian with a constant color (DC coefficient only).
    pub fn isotropic(position: Vec3, scale: f64, opacity: f64, rgb: [f64; 3]) -> Result<Self> {
        let mut sh = [[0.0; 3]; SH_COEFFS];
        sh[0] = rgb.map(super::sh::dc_from_color);
        Self::new(position, [scale; 3], [1.0, 0.0, 0.0, 0.0], opacity, sh)
    }

    pub fn scale(&self) -> Vec3 {
        self.log_scale.map(f64::exp)
    }

    pub fn opacity(&self) -> f64 {
        math::sigmoid(self.opacity_logit)
    }

    pub fn unit_rotation(&self) -> [f64; 4] {
        let n = quat_norm(self.rotation);
        self.rotation.map(|v| v / n)
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        quat_to_mat(self.unit_rotation())
    }

    pub fn covariance(&self) -> Mat3 {
        covariance(self)
    }

    pub fn to_params(&self) -> Params {
        let mut p = [0.0; PARAM_COUNT];
        p[0..3].copy_from_slice(&self.position);
        p[3..6].copy_from_slice(&self.log_scale);
        p[6..10].copy_from_slice(&self.rotation);
        p[10] = self.opacity_logit;
        for (k, coeff) in self.sh.iter().enumerate() {
            p[layout::SH + 3 * k..layout::SH + 3 * k + 3].copy_from_slice(coeff);
        }
        p
    }

    pub fn from_params(p: &Params) -> Self {
        let mut sh = [[0.0; 3]; SH_COEFFS];
        for (k, coeff) in sh.iter_mut().enumerate() {
            coeff.copy_from_slice(&p[layout::SH + 3 * k..layout::SH + 3 * k + 3]);
        }
        Self {
            position: [p[0], p[1], p[2]],
            log_scale: [p[3], p[4], p[5]],
            rotation: [p[6], p[7], p[8], p[9]],
            opacity_logit: p[10],
            sh,
        }
    }

    /// Checks the type invariants after conversion to constrained values.
    pub fn validate(&self) -> Result<()> {
        let finite = self.to_params().iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("gaussian has non-finite parameters"));
        }
        if (quat_norm(self.rotation) - 1.0).abs() > 1e-6 {
            return Err(Error::invalid("gaussian rotation is not a unit quaternion"));
        }
        let a = self.opacity();
        if !(a > 0.0 && a < 1.0) || self.scale().iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("gaussian opacity or scale out of range"));
        }
        Ok(())
    }

    /// Rounds every parameter through `f32`, matching the on-disk precision.
    pub fn quantized(&self) -> Self {
        let mut p = self.to_params();
        for v in &mut p {
            *v = *v as f32 as f64;
        }
        Self::from_params(&p)
    }
}

pub fn quat_norm(q: [f64; 4]) -> f64 {
    q.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quat_to_mat(q: [f64; 4]) -> Mat3 {
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Pulls `dL/dR` back to the raw (unnormalized) quaternion.
pub(crate) fn quat_backward(q_raw: [f64; 4], d_r: &Mat3) -> [f64; 4] {
    let n = quat_norm(q_raw);
    let [w, x, y, z] = q_raw.map(|v| v / n);
    let partials: [Mat3; 4] = [
        [[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]],
        [[0.0, y, z], [y, -2.0 * x, -w], [z, w, -2.0 * x]],
        [[-2.0 * y, x, w], [x, 0.0, z], [-w, z, -2.0 * y]],
        [[-2.0 * z, -w, x], [w, -2.0 * z, y], [x, y, 0.0]],
    ];
    let mut d_unit = [0.0; 4];
    for (k, m) in partials.iter().enumerate() {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += 2.0 * m[i][j] * d_r[i][j];
            }
        }
        d_unit[k] = s;
    }
    let unit = [w, x, y, z];
    let radial: f64 = unit.iter().zip(&d_unit).map(|(a, b)| a * b).sum();
    std::array::from_fn(|k| (d_unit[k] - unit[k] * radial) / n)
}

/// `R diag(s^2) R^T`.
pub fn covariance(g: &Gaussian3D) -> Mat3 {
    let r = g.rotation_matrix();
    let s2 = g.scale().map(|s| s * s);
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| r[i][k] * s2[k] * r[j][k]).sum();
        }
    }
    out
}

/// Pulls `dL/dSigma` (full-matrix convention) back to log-scales and the raw
/// quaternion.
pub(crate) fn covariance_backward(g: &Gaussian3D, d_sigma: &Mat3) -> (Vec3, [f64; 4]) {
    let r = g.rotation_matrix();
    let s2 = g.scale().map(|s| s * s);
    let gs: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| 0.5 * (d_sigma[i][j] + d_sigma[j][i])));
    // dL/dR = 2 G R D
    let gr = math::mat_mul(&gs, &r);
    let d_r: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| 2.0 * gr[i][j] * s2[j]));
    // dL/dlog s_i = 2 s_i^2 (R^T G R)_ii
    let rtgr = math::mat_mul(&math::transpose(&r), &gr);
    let d_log_scale = std::array::from_fn(|i| 2.0 * s2[i] * rtgr[i][i]);
    (d_log_scale, quat_backward(g.rotation, &d_r))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> Vec3 {
        std::array::from_fn(|i| 0.5 * (self.min[i] + self.max[i]))
    }

    pub fn half_diagonal(&self) -> f64 {
        0.5 * math::norm(math::sub(self.max, self.min))
    }
}

/// The scene: an ordered list of Gaussians.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GaussianCloud {
    pub gaussians: Vec<Gaussian3D>,
}

impl GaussianCloud {
    pub fn new(gaussians: Vec<Gaussian3D>) -> Self {
        Self { gaussians }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Gaussian3D> {
        self.gaussians.iter()
    }

    /// Bounding box of the positions, `None` for an empty cloud.
    pub fn bounds(&self) -> Option<Aabb> {
        let first = self.gaussians.first()?.position;
        let mut b = Aabb { min: first, max: first };
        for g in &self.gaussians {
            for i in 0..3 {
                b.min[i] = b.min[i].min(g.position[i]);
                b.max[i] = b.max[i].max(g.position[i]);
            }
        }
        Some(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, g) in self.gaussians.iter().enumerate() {
            g.validate().map_err(|e| Error::invalid(format!("gaussian {i}: {e}")))?;
        }
        Ok(())
    }

    /// Renormalizes every quaternion; used after optimizer steps.
    pub fn normalize_rotations(&mut self) {
        for g in &mut self.gaussians {
            g.rotation = g.unit_rotation();
        }
    }

    pub fn quantized(&self) -> Self {
        Self::new(self.gaussians.iter().map(Gaussian3D::quantized).collect())
    }
}

impl FromIterator<Gaussian3D> for GaussianCloud {
    fn from_iter<I: IntoIterator<Item = Gaussian3D>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Mat3, b: &Mat3) -> bool {
        (0..3).all(|i| (0..3).all(|j| (a[i][j] - b[i][j]).abs() < 1e-12))
    }

    fn gaussian(scale: Vec3, q: [f64; 4]) -> Gaussian3D {
        Gaussian3D::new([0.0; 3], scale, q, 0.5, [[0.0; 3]; 9]).unwrap()
    }

    #[test]
    fn covariance_cases() {
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(close(&gaussian([1.0; 3], [1.0, 0.0, 0.0, 0.0]).covariance(), &id));
        let diag = [[4.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(close(&gaussian([2.0, 1.0, 1.0], [1.0, 0.0, 0.0, 0.0]).covariance(), &diag));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let rotated = [[1.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(close(&gaussian([2.0, 1.0, 1.0], [h, 0.0, 0.0, h]).covariance(), &rotated));
    }

    #[test]
    fn params_round_trip() {
        let mut g = gaussian([0.1, 0.2, 0.3], [0.9, 0.1, -0.2, 0.3]);
        g.sh[4] = [0.1, 0.2, 0.3];
        assert_eq!(Gaussian3D::from_params(&g.to_params()), g);
        assert_eq!(g.to_params()[layout::SH + 12], 0.1);
    }

    #[test]
    fn constructor_checks() {
        let sh = [[0.0; 3]; 9];
        assert!(Gaussian3D::new([0.0; 3], [0.0, 1.0, 1.0], [1.0, 0.0, 0.0, 0.0], 0.5, sh).is_err());
        assert!(Gaussian3D::new([0.0; 3], [1.0; 3], [1.0, 0.0, 0.0, 0.0], 1.0, sh).is_err());
        assert!(Gaussian3D::new([0.0; 3], [1.0; 3], [0.0; 4], 0.5, sh).is_err());
        let g = Gaussian3D::new([0.0; 3], [1.0; 3], [2.0, 0.0, 0.0, 0.0], 0.25, sh).unwrap();
        assert_eq!(g.rotation, [1.0, 0.0, 0.0, 0.0]);
        assert!((g.opacity() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn bounds_contain_positions() {
        let cloud: GaussianCloud = [[0.0, 1.0, -1.0], [2.0, -3.0, 0.5]]
            .into_iter()
            .map(|p| Gaussian3D::isotropic(p, 0.1, 0.5, [0.5; 3]).unwrap())
            .collect();
        let b = cloud.bounds().unwrap();
        assert_eq!(b.min, [0.0, -3.0, -1.0]);
        assert_eq!(b.max, [2.0, 1.0, 0.5]);
        assert!(cloud.iter().all(|g| b.contains(g.position)));
        assert!(GaussianCloud::default().bounds().is_none());
    }
}
