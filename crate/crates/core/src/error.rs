use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("analysis operator row {row} is zero")]
    ZeroRow { row: usize },

    #[error("random frame is rank deficient after {attempts} attempts")]
    RankDeficient { attempts: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("prior incompatible with operator: no nonzero signal after {attempts} support draws")]
    IncompatiblePrior { attempts: usize },

    #[error("trivial null space: no nonzero signal has this support")]
    TrivialNullSpace,

    #[error("bound undefined for this prior/operator: {0}")]
    BoundUndefined(String),

    #[error("weight design failed at coordinate {coordinate}: {reason}")]
    Design { coordinate: usize, reason: String },

    #[error("statistical dimension estimator did not converge on {failed} of {trials} trials")]
    NonConvergence { failed: usize, trials: usize },

    #[error("linear program is {0}")]
    Lp(&'static str),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error in {origin}: {message}")]
    Parse { origin: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("sweep failed at m = {m}, trial {trial}, scheme {scheme}: {source}")]
    Sweep {
        m: usize,
        trial: usize,
        scheme: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::RankDeficient { .. }
            | Error::IncompatiblePrior { .. }
            | Error::TrivialNullSpace
            | Error::BoundUndefined(_)
            | Error::Design { .. }
            | Error::NonConvergence { .. }
            | Error::Lp(_) => true,
            Error::Sweep { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
