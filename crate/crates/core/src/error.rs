use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("learner did not converge after {iterations} iterations (last deviance {deviance})")]
    NotConverged { iterations: usize, deviance: f64 },

    #[error("tilting has no finite solution: weighted target mean {mean} is not inside (0, 1)")]
    TiltDiverged { mean: f64 },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("time {t}: {source}")]
    Time {
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification used by the command line to choose an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Estimation,
}

impl Error {
    pub fn at_time(self, t: usize) -> Self {
        Error::Time {
            t,
            source: Box::new(self),
        }
    }

    pub fn in_fold(self, fold: usize) -> Self {
        Error::Fold {
            fold,
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Schema(_)
            | Error::Validation(_)
            | Error::Range(_)
            | Error::Domain(_)
            | Error::Io(_)
            | Error::Csv(_) => ErrorKind::Data,
            Error::Fold { source, .. } | Error::Time { source, .. } => source.kind(),
            _ => ErrorKind::Estimation,
        }
    }
}
