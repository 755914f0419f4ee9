//! Error type shared across the crate.

use std::fmt;

/// Errors produced by model construction, filter design, and simulation.
#[derive(Debug)]
pub enum Error {
    /// A PSD model could not be constructed (bad table, non-positive bandwidth, ...).
    InvalidPsd(String),
    /// An ADC or experiment configuration is out of its admissible range.
    InvalidConfig(String),
    /// Normalization was requested for a model with zero total power.
    ZeroPower,
    /// The folded spectrum is identically zero; no water level exists.
    NoSignal,
    /// An iterative solver hit its iteration cap before reaching tolerance.
    Convergence(String),
    /// Sequence lengths passed to the simulator do not line up.
    DimensionMismatch(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidPsd(msg) => write!(f, "invalid PSD model: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::ZeroPower => write!(f, "PSD has zero total power"),
            Error::NoSignal => write!(f, "folded spectrum is identically zero"),
            Error::Convergence(msg) => write!(f, "solver failed to converge: {msg}"),
            Error::DimensionMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::Io(err) => write!(f, "i/o error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
