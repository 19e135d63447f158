//! Noise schedules, prior fusion, DDIM updates and the sampling loop.

mod fusion;
mod sampler;
mod schedule;

pub use fusion::{
    ddim_sigma, ddim_step, ddim_step_canonical, fuse_mvd, fuse_noise, fuse_noise_weighted, lf_noise_from_render,
    schedule_weights, variance_compensate, DdimStep, FusionWeights, ViewPrediction,
};
pub use sampler::{sample, sample_latent, SampleOptions, SampleTrace, StepRecord, UpdateRule};
pub use schedule::{NoiseSchedule, ScheduleKind};
