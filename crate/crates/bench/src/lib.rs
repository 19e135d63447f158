//! Shared benchmark fixtures.

use std::sync::Arc;

use zp3_core::priors::{GroundTruthMvd, PriorBundle, ReferenceView, RenderPrior, TargetView};
use zp3_core::synth::{render_observation, toy_object, ToyParams};
use zp3_core::views::{camera_from_spec, ViewSpec};
use zp3_core::{Camera, GaussianCloud};

pub const SIZE: usize = 64;

/// The toy object scaled to roughly `n` Gaussians.
pub fn cloud(n: usize) -> GaussianCloud {
    let per_cluster = n.div_ceil(8).max(1);
    toy_object(&ToyParams { per_cluster, ..ToyParams::default() }, 1).expect("valid toy parameters")
}

pub fn camera(azimuth: f64) -> Camera {
    let p = ToyParams::default();
    let spec = ViewSpec::new(azimuth, 15.0, p.radius, [0.0; 3]).expect("valid view");
    camera_from_spec(&spec, p.focal, p.focal, SIZE as f64 / 2.0, SIZE as f64 / 2.0).expect("valid camera")
}

pub fn target(azimuth: f64) -> TargetView {
    let p = ToyParams::default();
    let spec = ViewSpec::new(azimuth, 0.0, p.radius, [0.0; 3]).expect("valid view");
    TargetView::from_spec("bench", spec, p.focal, SIZE, SIZE).expect("valid target")
}

/// Oracle multi-view prior over the toy object with three references and a
/// low-frequency render of the same object.
pub fn bundle(cloud: &GaussianCloud) -> PriorBundle {
    let p = ToyParams::default();
    let shared = Arc::new(cloud.clone());
    let references = [0.0, 45.0, 90.0]
        .iter()
        .map(|&az| {
            let spec = ViewSpec::new(az, 0.0, p.radius, [0.0; 3]).expect("valid view");
            let obs = render_observation(cloud, spec, &p).expect("render");
            ReferenceView { id: format!("ref{az}"), spec, image: obs.image }
        })
        .collect();
    let mut bundle = PriorBundle::new(Arc::new(GroundTruthMvd::new(shared.clone())), references);
    bundle.lf = Some(RenderPrior::new(shared));
    bundle
}
