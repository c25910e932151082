use thiserror::Error;

/// Errors raised anywhere in the simulator and angle-map pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("zero-forcing infeasible: {receive_antennas} receive antennas cannot null {users} users")]
    Infeasible { receive_antennas: usize, users: usize },

    #[error("unknown token id {0}")]
    Vocabulary(usize),

    #[error("decoder emitted no end token within {0} steps")]
    Truncation(usize),

    #[error("incompatible artifacts: {0}")]
    Compatibility(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
