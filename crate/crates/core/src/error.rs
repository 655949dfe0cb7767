use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tables with inconsistent dimensions or out-of-range indices.
    #[error("structural error: {0}")]
    Structural(String),

    /// Parameters outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate measure at base point {b}: {reason}")]
    DegenerateMeasure { b: usize, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A fundamental-domain row that does not satisfy its stabilizer constraint.
    #[error("inconsistent filter row at base point {b}: stabilizer element {g} breaks the constraint at {h} (deviation {deviation:e})")]
    Inconsistent { b: usize, g: usize, h: usize, deviation: f64 },

    #[error("theta map does not cover kernel support pair (c={c}, b={b})")]
    Coverage { c: usize, b: usize },

    #[error("internal invariant breach: {0}")]
    InvariantBreach(String),

    #[error("malformed scenario: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
