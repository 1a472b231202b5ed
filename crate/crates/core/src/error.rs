use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numerical,
    Stability,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {index} out of range for a network of {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error(
        "nodal transfer function vanishes at omega = {omega} (|h| = {magnitude:e}); choose a different omega0"
    )]
    TransmissionZero { omega: f64, magnitude: f64 },

    #[error("frequency omega = {omega} rejected: {reason}")]
    FrequencyRejected { omega: f64, reason: String },

    #[error("network state matrix is not Hurwitz (spectral abscissa {abscissa:e})")]
    NotHurwitz { abscissa: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::IndexOutOfRange { .. }
            | Error::DimensionMismatch(_)
            | Error::Validation(_)
            | Error::Parse { .. }
            | Error::Io(_) => ErrorKind::Input,
            Error::NotHurwitz { .. } => ErrorKind::Stability,
            Error::Singular(_)
            | Error::TransmissionZero { .. }
            | Error::FrequencyRejected { .. }
            | Error::Numerical(_) => ErrorKind::Numerical,
        }
    }
}
