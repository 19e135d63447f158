//! Gaussian scene representation, differentiable rendering and density control.

mod density;
mod gaussian;
mod io;
mod project;
mod render;
pub mod sh;

pub use density::{densify, densify_indexed, prune, prune_indexed, DensifyOptions};
pub use gaussian::{covariance, layout, quat_to_mat, Aabb, Gaussian3D, GaussianCloud, Params, PARAM_COUNT, SH_COEFFS};
pub use io::{load_cloud, read_cloud, save_cloud, write_cloud, write_ply};
pub use project::{project, Splat2D};
pub use render::{
    render, render_backward, render_forward, render_reference, render_with, RenderContext, RenderGradients,
    RenderOptions, RenderOutput,
};
pub use sh::{sh_eval, sh_eval_masked};
