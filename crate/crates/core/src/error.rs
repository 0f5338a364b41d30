use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (wrong dimension, bad shape, non-finite input).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("integration overflow at t = {t} (step {step}): state {state:?}")]
    Overflow { t: f64, step: usize, state: Vec<f64> },

    #[error("tangent basis overflow at t = {t}: column norm {norm:e} exceeds 1e150")]
    TangentOverflow { t: f64, norm: f64 },

    #[error("rank-deficient tangent basis: column {column} has norm {norm:e}")]
    RankDeficient { column: usize, norm: f64 },

    #[error("numeric fault: {0}")]
    Numeric(String),

    #[error("dataset shortage for {split}: requested {requested}, available {available}")]
    Shortage {
        split: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("invalid file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Wraps an integration failure with the time offset at which the enclosing phase began.
    pub(crate) fn shifted(self, t0: f64) -> Self {
        match self {
            Error::Overflow { t, step, state } => Error::Overflow { t: t + t0, step, state },
            Error::TangentOverflow { t, norm } => Error::TangentOverflow { t: t + t0, norm },
            other => other,
        }
    }
}
