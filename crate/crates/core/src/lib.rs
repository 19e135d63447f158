//! Sparse-view object reconstruction with Gaussian splatting and a fused
//! diffusion prior.
//!
//! The crate is split into the splatting renderer ([`splat`]), camera and
//! view planning ([`views`]), the diffusion schedule and sampler
//! ([`diffusion`]), prior sources and the backend bridge ([`priors`]), the
//! optimization loops ([`reconstruct`]) and image metrics ([`eval`]).

pub mod diffusion;
pub mod error;
pub mod eval;
pub mod image;
pub(crate) mod math;
pub mod priors;
pub mod reconstruct;
pub mod splat;
pub mod synth;
pub mod views;

pub use error::{Error, Result};
pub use image::{Domain, Image, LatentImage};
pub use splat::{Gaussian3D, GaussianCloud};
pub use views::{Camera, ViewSpec};
