use thiserror::Error;

pub type Result<T> = std::result::Result<T, HawkesError>;

#[derive(Debug, Error)]
pub enum HawkesError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid event sequence: {0}")]
    InvalidEvents(String),

    #[error("model is not stationary (branching ratio {0} >= 1)")]
    NonStationary(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {events} events for {parameters} parameters")]
    InsufficientData { events: usize, parameters: usize },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("simulation aborted: {0}")]
    Runaway(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
