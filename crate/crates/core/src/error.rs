use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong in the estimation pipeline.
///
/// Variants are grouped by [`ErrorKind`] so front ends can map them onto
/// stable exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid latent configuration: P[{row}][{col}] = {value} outside [0, 1]")]
    InvalidProbability { row: usize, col: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("rank deficient embedding: singular value {index} is {value:e}, below 1e-12")]
    RankDeficient { index: usize, value: f64 },

    #[error("singular second-moment matrix (collinear embedding), condition number {condition:e}")]
    SingularSecondMoment { condition: f64 },

    #[error("collinear design columns: {}", .columns.join(", "))]
    Collinear { columns: Vec<String> },

    #[error("ill-conditioned system: condition number {condition:e} exceeds 1e12")]
    IllConditioned { condition: f64 },

    #[error("bias correction over-corrects: (M - Omega) is not positive definite; use a smaller Omega or more nodes")]
    OverCorrected,

    #[error("logistic fit: perfect separation detected after {iterations} iterations")]
    Separation { iterations: usize },

    #[error("logistic fit did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("{what} failed after {attempts} attempts")]
    RetriesExhausted { what: String, attempts: usize },

    #[error("{path}: {message}")]
    Data { path: String, message: String },

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("missing input file {}", .0.display())]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Dimension(_) | Error::MissingFile(_) => ErrorKind::Config,
            Error::Data { .. }
            | Error::Row { .. }
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorKind::Data,
            Error::InvalidProbability { .. }
            | Error::RankDeficient { .. }
            | Error::SingularSecondMoment { .. }
            | Error::Collinear { .. }
            | Error::IllConditioned { .. }
            | Error::OverCorrected
            | Error::Separation { .. }
            | Error::NoConvergence { .. }
            | Error::RetriesExhausted { .. } => ErrorKind::Numerical,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
