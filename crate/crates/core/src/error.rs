use thiserror::Error;

/// Errors produced by the fitting library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid knots: {0}")]
    InvalidKnots(String),

    #[error("point {point} outside domain [{lo}, {hi}]")]
    Domain { point: f64, lo: f64, hi: f64 },

    #[error("derivative order {order} exceeds degree {degree}")]
    Order { order: usize, degree: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("factorization of {block} failed: matrix is not positive definite")]
    Conditioning { block: String },

    #[error("library column `{0}` has zero norm and cannot be normalized")]
    DegenerateColumn(String),

    #[error("non-finite loss at iteration {iter}")]
    Divergence {
        iter: usize,
        last_beta: Vec<f64>,
        last_theta: Vec<f64>,
    },

    #[error("configuration: {0}")]
    Config(String),

    #[error("integration blew up at t = {time}; try a smaller time step")]
    Integration { time: f64 },

    #[error("equation discovery removed every candidate; last non-empty support: {last_support:?}")]
    DiscoveryFailed { last_support: Vec<String> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
