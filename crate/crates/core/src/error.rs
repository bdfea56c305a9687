use thiserror::Error;

/// Errors raised anywhere in the simulation stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} for `{name}` is outside [0, 1]")]
    NotAProbability { name: &'static str, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("arm index {index} out of range for {arms} arms")]
    ArmOutOfRange { index: usize, arms: usize },
    #[error("parameter vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("sink {sink} is unreachable from source {origin}")]
    Unreachable { origin: usize, sink: usize },
    #[error("empty super-arm family")]
    EmptyFamily,
    #[error("invalid matroid: {0}")]
    InvalidMatroid(String),
    #[error("no connected graph after {0} attempts")]
    RegenerationExhausted(u32),
    #[error("traces come from different instances")]
    MixedInstances,
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::NotAProbability { name, value })
    }
}
