use thiserror::Error;

#[derive(Debug, Error)]
pub enum KaError {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid edge: {0}")]
    Edge(String),
    #[error("invalid parameter: {0}")]
    Params(String),
    #[error("window mismatch: {0}")]
    Window(String),
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
    #[error("malformed move sequence: {0}")]
    MoveSequence(String),
    #[error("singular normal equations (condition estimate {condition:.3e})")]
    Singular { condition: f64 },
    #[error("iteration cap {0} exceeded")]
    CapExceeded(usize),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, KaError>;
