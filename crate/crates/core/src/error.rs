use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("singular denominator in {context}")]
    Singular { context: &'static str },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no resonance dip detected in spectrum")]
    NoResonance,

    #[error("ill-conditioned circle fit: {0}")]
    IllConditioned(String),

    #[error("no root bracket found for target {target} Hz in [{lo}, {hi}] T")]
    NoBracket { target: f64, lo: f64, hi: f64 },

    #[error("no echo peak found in trace")]
    NoPeak,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unknown spin state label `{0}`")]
    UnknownLabel(String),

    #[error("invalid sweep axis: {0}")]
    InvalidAxis(String),

    #[error("unphysical state: {0}")]
    Unphysical(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
