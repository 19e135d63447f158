//! Cameras, viewpoint specifications, fusion-weight classification and the
//! rotated-view plan that drives refinement.

mod camera;
mod plan;
mod pose_file;

pub use camera::{camera_from_spec, far_field_adapt, Camera, Projection, ViewSpec};
pub use plan::{
    classify_view, make_input_set, make_rotation_plan, max_azimuth_gap, PlanParams, PlanStrategy,
    RotationPlan, ViewClassifier,
};
pub use pose_file::{PoseEntry, PoseFile};
pub use crate::math::{angular_distance, wrap_degrees};
