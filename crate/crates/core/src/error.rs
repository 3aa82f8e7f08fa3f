use thiserror::Error;

use crate::net::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} inputs, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("width mismatch: {0}")]
    Width(String),

    #[error("depth mismatch: {0}")]
    Depth(String),

    #[error("invalid network: {0}")]
    Invalid(#[from] Violation),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("target is not in the declared Hölder ball: {0}")]
    BallMembership(String),

    #[error("inexact conversion of {value} to binary64 (nearest is {nearest})")]
    Inexact { value: String, nearest: f64 },

    #[error("cannot parse dyadic from {0:?}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
