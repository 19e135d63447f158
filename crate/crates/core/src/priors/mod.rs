//! Noise predictors: the analytic mixture oracle, rendering-based sources and
//! the bridge to external backends.

mod bridge;
mod oracle;
pub mod protocol;
mod sources;

pub use bridge::{bridge_lpips, bridge_predict, BridgeClient, BridgeConfig, BridgePredictor, BridgeTransport};
pub use oracle::{oracle_predict, GaussianMixtureOracle, MixtureComponent, NoisePredictor, NullPredictor};
pub use protocol::{RequestKind, Tensor};
pub use sources::{
    render_prior_source, unsharp, BridgeSource, GroundTruthMvd, PriorBundle, PriorSource, ReferenceView, RenderPrior,
    SharpenOracle, StaticPrior, TargetView,
};
