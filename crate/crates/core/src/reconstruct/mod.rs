//! Coarse fitting from partial observations and refinement against sampled
//! supervision views.

mod adam;
mod checkpoint;
mod loss;
mod observation;
mod refine;
mod train;

pub use adam::LearningRates;
pub use checkpoint::{load_checkpoint, save_checkpoint, sidecar_path, CheckpointMeta, MetricRecord};
pub(crate) use loss::multiscale_l1;
pub use loss::{composite_loss, masked_mse, Perceptual, PYRAMID_LEVELS};
pub use observation::{init_cloud, Observation};
pub use refine::{refine, refine_with, BatchOutcome, RefineConfig, RefineRun, Supervision};
pub use train::{coarse_fit, coarse_fit_report, DensitySchedule, FitConfig, FitReport};
