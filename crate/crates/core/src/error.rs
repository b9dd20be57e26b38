use thiserror::Error;

use crate::exactdp::QTable;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("support violation: p({index}) = {p} > 0 where reference probability is 0")]
    SupportViolation { index: usize, p: f64 },

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    /// Iteration budget ran out; the last iterate is kept for diagnostics.
    #[error("no convergence after {iterations} sweeps (last sup-norm delta {delta:e})")]
    NonConvergence {
        iterations: usize,
        delta: f64,
        last: Box<QTable>,
    },

    #[error("replay memory not ready: {count} resident, {required} required")]
    NotReady { count: usize, required: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid baselines: human/reference score equals random score ({0})")]
    InvalidBaselines(f64),

    #[error("non-finite loss at iteration {iter}: {loss}")]
    NonFiniteLoss { iter: u64, loss: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
