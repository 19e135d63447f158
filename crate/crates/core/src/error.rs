use std::time::Duration;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// `alpha_bar[t] == 1`, so `sqrt(1 - alpha_bar)` would divide by zero.
    #[error("degenerate timestep {t}: alpha_bar is 1")]
    DegenerateTimestep { t: usize },

    #[error("optimization failure: {0}")]
    OptimizationFailure(String),

    #[error("bridge timed out after {0:?}")]
    BridgeTimeout(Duration),

    #[error("bridge protocol error: {0}")]
    Protocol(String),

    #[error("bridge backend error: {0}")]
    Backend(String),

    #[error("batch {batch}: {source}")]
    Batch {
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Strips batch annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Batch { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_bridge(&self) -> bool {
        matches!(
            self.root(),
            Error::BridgeTimeout(_) | Error::Protocol(_) | Error::Backend(_)
        )
    }
}
