use thiserror::Error;

use crate::harness::config::ConfigError;
use crate::planner::PlanError;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a type invariant or an operation precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Query point outside the domain of a map or grid.
    #[error("domain error: {0}")]
    Domain(String),

    #[error(transparent)]
    Plan(#[from] PlanError),

    #[error("uav {uav}: {source}")]
    UavPlan { uav: usize, source: PlanError },

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("unknown profile `{name}`; available profiles: {}", available.join(", "))]
    UnknownProfile { name: String, available: Vec<String> },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
