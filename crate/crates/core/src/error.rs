use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("ξ = {xi} lies outside the map domain [{a}, {b}]")]
    Domain { xi: f64, a: f64, b: f64 },

    #[error("invalid coordinate map: {0}")]
    InvalidMap(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("grid functions live on different grids")]
    GridMismatch,

    #[error("grid too coarse: {needed} nodes required, got {got}")]
    GridTooCoarse { needed: usize, got: usize },

    #[error("boundary condition violated: φ(0) = {left}, φ(T) = {right} (tolerance {tol})")]
    Boundary { left: f64, right: f64, tol: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("non-finite energy at iteration {iteration}")]
    NonFiniteEnergy { iteration: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("inconsistent configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}
