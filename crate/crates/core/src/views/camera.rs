use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Mat3, Vec3};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Projection {
    #[default]
    Perspective,
    /// A perspective camera pushed far back with a matching focal length, used
    /// as a stand-in for orthographic backbones.
    FarField,
}

/// Pinhole camera with a world-to-camera pose.
///
/// Camera space follows the usual vision convention: `+x` right, `+y` down,
/// `+z` forward. Pixel coordinates put pixel `(i, j)`'s center at
/// `(i + 0.5, j + 0.5)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation.
    pub rotation: Mat3,
    /// World-to-camera translation.
    pub translation: Vec3,
    #[serde(default)]
    pub projection: Projection,
    /// Distance along the optical axis to the point the camera is aimed at.
    pub focus_distance: f64,
}

impl Camera {
    /// Builds a camera from intrinsics and a world-to-camera pose. The focus
    /// distance defaults to the depth of the world origin.
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::invalid(format!("focal lengths must be positive, got {fx}, {fy}")));
        }
        if !math::is_rotation(&rotation, 1e-6) {
            return Err(Error::invalid("camera rotation is not orthonormal with det +1"));
        }
        let origin_depth = translation[2];
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            projection: Projection::Perspective,
            focus_distance: if origin_depth > 0.0 { origin_depth } else { 1.0 },
        })
    }

    #[inline]
    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        math::add(math::mat_vec(&self.rotation, p), self.translation)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        math::scale(math::mat_vec(&math::transpose(&self.rotation), self.translation), -1.0)
    }

    /// Unit viewing direction in world coordinates.
    pub fn forward(&self) -> Vec3 {
        self.rotation[2]
    }

    /// Pixel position of a world point, or `None` if it is not in front of the camera.
    pub fn project_point(&self, p: Vec3) -> Option<[f64; 2]> {
        let c = self.world_to_camera(p);
        (c[2] > 0.0).then(|| [self.fx * c[0] / c[2] + self.cx, self.fy * c[1] / c[2] + self.cy])
    }

    /// World point at camera-space depth `depth` along the ray through pixel `(u, v)`.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let cam = [(u - self.cx) / self.fx * depth, (v - self.cy) / self.fy * depth, depth];
        let rt = math::transpose(&self.rotation);
        math::mat_vec(&rt, math::sub(cam, self.translation))
    }
}

/// A viewpoint on a sphere around a look-at target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    /// Degrees, normalized to `[0, 360)`.
    pub azimuth: f64,
    /// Degrees in `[-90, 90]`.
    pub elevation: f64,
    pub radius: f64,
    pub target: Vec3,
}

impl ViewSpec {
    pub fn new(azimuth: f64, elevation: f64, radius: f64, target: Vec3) -> Result<Self> {
        if !azimuth.is_finite() {
            return Err(Error::invalid("azimuth must be finite"));
        }
        if !(-90.0..=90.0).contains(&elevation) {
            return Err(Error::invalid(format!("elevation {elevation} outside [-90, 90]")));
        }
        if !(radius > 0.0) {
            return Err(Error::invalid(format!("radius must be positive, got {radius}")));
        }
        Ok(Self {
            azimuth: math::wrap_degrees(azimuth) + 0.0,
            elevation: elevation + 0.0,
            radius,
            target,
        })
    }

    /// Spherical coordinates of a camera's center about `target`.
    pub fn from_camera(cam: &Camera, target: Vec3) -> Result<Self> {
        let d = math::sub(cam.center(), target);
        let radius = math::norm(d);
        if !(radius > 0.0) {
            return Err(Error::invalid("camera sits on its target"));
        }
        // Snap away round-off from the pose matrices.
        let snap = |v: f64| (v * 1e9).round() / 1e9;
        let azimuth = snap(d[1].atan2(d[0]).to_degrees());
        let elevation = snap((d[2] / radius).clamp(-1.0, 1.0).asin().to_degrees());
        ViewSpec::new(azimuth, elevation, radius, target)
    }

    pub fn position(&self) -> Vec3 {
        let (az, el) = (self.azimuth.to_radians(), self.elevation.to_radians());
        math::add(
            self.target,
            [
                self.radius * el.cos() * az.cos(),
                self.radius * el.cos() * az.sin(),
                self.radius * el.sin(),
            ],
        )
    }
}

/// Camera on the sphere described by `spec`, looking at its target with `+z`
/// as the world up direction.
pub fn camera_from_spec(spec: &ViewSpec, fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Camera> {
    if !(spec.radius > 0.0) {
        return Err(Error::invalid("degenerate look-at: camera position equals target"));
    }
    let center = spec.position();
    let forward = math::normalize(math::sub(spec.target, center));
    // Horizontal tangent of the azimuth circle; equals forward x up for every
    // elevation short of the poles and stays well defined at them.
    let az = spec.azimuth.to_radians();
    let right = [-az.sin(), az.cos(), 0.0];
    let down = math::cross(forward, right);
    let rotation = [right, down, forward];
    let translation = math::scale(math::mat_vec(&rotation, center), -1.0);
    let mut cam = Camera::new(fx, fy, cx, cy, rotation, translation)?;
    cam.focus_distance = spec.radius;
    Ok(cam)
}

/// Moves the camera back along its axis so the focus distance grows by
/// `factor`, scaling the focal lengths to keep the target's projected size.
pub fn far_field_adapt(cam: &Camera, factor: f64) -> Result<Camera> {
    if !(factor >= 1.0) {
        return Err(Error::invalid(format!("far-field factor must be >= 1, got {factor}")));
    }
    let mut out = cam.clone();
    out.translation[2] += (factor - 1.0) * cam.focus_distance;
    out.focus_distance = cam.focus_distance * factor;
    out.fx *= factor;
    out.fy *= factor;
    if factor > 1.0 {
        out.projection = Projection::FarField;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn spec_at_azimuth_zero() {
        let spec = ViewSpec::new(0.0, 0.0, 2.0, [0.0; 3]).unwrap();
        let cam = camera_from_spec(&spec, 50.0, 50.0, 32.0, 32.0).unwrap();
        assert!(close(cam.center(), [2.0, 0.0, 0.0], 1e-12));
        assert!(close(cam.forward(), [-1.0, 0.0, 0.0], 1e-12));
        assert!(math::is_rotation(&cam.rotation, 1e-12));
        // the target lands on the principal point
        let p = cam.project_point([0.0; 3]).unwrap();
        assert!((p[0] - 32.0).abs() < 1e-12 && (p[1] - 32.0).abs() < 1e-12);
        // world +z projects upward in the image (smaller v)
        let up = cam.project_point([0.0, 0.0, 0.5]).unwrap();
        assert!(up[1] < 32.0);
    }

    #[test]
    fn spec_at_azimuth_ninety() {
        let spec = ViewSpec::new(90.0, 0.0, 2.0, [0.0; 3]).unwrap();
        let cam = camera_from_spec(&spec, 50.0, 50.0, 32.0, 32.0).unwrap();
        assert!(close(cam.center(), [0.0, 2.0, 0.0], 1e-12));
    }

    #[test]
    fn zero_radius_rejected() {
        assert!(ViewSpec::new(0.0, 0.0, 0.0, [0.0; 3]).is_err());
        let spec = ViewSpec { azimuth: 0.0, elevation: 0.0, radius: 0.0, target: [0.0; 3] };
        assert!(matches!(camera_from_spec(&spec, 1.0, 1.0, 0.0, 0.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn poles_are_well_defined() {
        for el in [90.0, -90.0] {
            let spec = ViewSpec::new(30.0, el, 3.0, [0.0; 3]).unwrap();
            let cam = camera_from_spec(&spec, 10.0, 10.0, 0.0, 0.0).unwrap();
            assert!(math::is_rotation(&cam.rotation, 1e-9));
        }
    }

    #[test]
    fn azimuth_normalized() {
        let spec = ViewSpec::new(-90.0, 0.0, 1.0, [0.0; 3]).unwrap();
        assert_eq!(spec.azimuth, 270.0);
        assert!(ViewSpec::new(0.0, 91.0, 1.0, [0.0; 3]).is_err());
    }

    #[test]
    fn spec_round_trips_through_camera() {
        let spec = ViewSpec::new(123.0, -30.0, 2.5, [0.1, -0.2, 0.3]).unwrap();
        let cam = camera_from_spec(&spec, 60.0, 60.0, 32.0, 32.0).unwrap();
        let back = ViewSpec::from_camera(&cam, spec.target).unwrap();
        assert!((back.azimuth - 123.0).abs() < 1e-9);
        assert!((back.elevation + 30.0).abs() < 1e-9);
        assert!((back.radius - 2.5).abs() < 1e-12);
    }

    #[test]
    fn far_field_scales_distance_and_focal() {
        let spec = ViewSpec::new(40.0, 10.0, 2.0, [0.0; 3]).unwrap();
        let cam = camera_from_spec(&spec, 50.0, 55.0, 32.0, 30.0).unwrap();
        let far = far_field_adapt(&cam, 100.0).unwrap();
        let dist = math::norm(far.center());
        assert!((dist - 200.0).abs() < 1e-9);
        assert_eq!(far.fx, 5000.0);
        assert_eq!(far.fy, 5500.0);
        assert_eq!(far.projection, Projection::FarField);
        // the on-axis target keeps its pixel position
        let a = cam.project_point([0.0; 3]).unwrap();
        let b = far.project_point([0.0; 3]).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-6 && (a[1] - b[1]).abs() < 1e-6);
    }

    #[test]
    fn far_field_identity_and_first_order_size() {
        let spec = ViewSpec::new(0.0, 0.0, 2.0, [0.0; 3]).unwrap();
        let cam = camera_from_spec(&spec, 50.0, 50.0, 32.0, 32.0).unwrap();
        assert_eq!(far_field_adapt(&cam, 1.0).unwrap(), cam);
        let far = far_field_adapt(&cam, 100.0).unwrap();
        // a point on the focus plane keeps its projection exactly
        let p = [0.0, 0.3, -0.2];
        let a = cam.project_point(p).unwrap();
        let b = far.project_point(p).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        assert!(far_field_adapt(&cam, 0.5).is_err());
    }
}
