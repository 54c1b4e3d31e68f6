//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("density must exceed 1e-300, got {rho}")]
    InvalidDensity { rho: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("decomposition failed: {0}")]
    DecompositionFailed(String),

    #[error("iteration did not converge: best value {best}")]
    NonConvergence { best: f64 },

    #[error("margin exhausted: needed {needed}, available {available}")]
    MarginExhausted { needed: f64, available: f64 },

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("source field mean must vanish, got integral {residual}")]
    CompatibilityViolated { residual: f64 },

    #[error("source support exceeds the star-shaped cover")]
    DomainNotCovered,

    #[error("strictness requires lifting q by {required}, cap is {cap}")]
    StrictnessUnachievable { required: f64, cap: f64 },

    #[error("no admissible stress scale below {chi_max}")]
    ChiSearchFailed { chi_max: f64 },

    #[error("profile violates bounds: {0}")]
    ProfileViolatesBounds(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error("file format violation: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
