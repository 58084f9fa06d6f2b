use thiserror::Error;

/// Errors raised anywhere in the simulation, training or evaluation chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid length: {0}")]
    InvalidLength(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("numerical failure: {0}")]
    Numerics(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("Q-factor undefined for BER {0} (must be below 0.5)")]
    QUndefined(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
