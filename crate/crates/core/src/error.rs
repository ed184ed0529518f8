use thiserror::Error;

/// Errors raised by the core library.
///
/// Variants are grouped so a front end can map them onto coarse categories
/// (see [`Error::category`]).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid bit-width {0}: must be in 2..=32")]
    InvalidBitWidth(u32),

    #[error("format mismatch: {left}-bit vs {right}-bit")]
    FormatMismatch { left: u8, right: u8 },

    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("capacity error: {0} neurons exceeds the per-core limit of 256")]
    Capacity(usize),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("address error: {0}")]
    Address(String),

    #[error("channel closed with {pending} packet(s) pending")]
    ChannelClosed { pending: usize },

    #[error("pipeline stalled: no progress for {rounds} scheduling rounds ({detail})")]
    Deadlock { rounds: usize, detail: String },

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable category name.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Calibration(_) => "calibration",
            Error::Protocol(_) | Error::Address(_) | Error::ChannelClosed { .. } => "protocol",
            Error::Deadlock { .. } => "simulation",
            Error::Capacity(_) => "capacity",
            _ => "config",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
