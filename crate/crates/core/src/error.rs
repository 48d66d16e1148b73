use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty population")]
    EmptyPopulation,

    #[error("duplicate user_id '{0}'")]
    DuplicateUser(String),

    #[error("non-finite value for user_id '{0}'")]
    NonFiniteValue(String),

    #[error("unknown user_id '{0}'")]
    UnknownUser(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("zero variance")]
    ZeroVariance,

    #[error("zero rank variance")]
    ZeroRankVariance,

    #[error("invalid local ranks: {0}")]
    InvalidLocalRanks(String),

    #[error("rank arithmetic overflow")]
    RankOverflow,

    #[error("instance too large for exact oracle: C({m}, {k}) exceeds {budget}")]
    OracleBudget { m: usize, k: usize, budget: u64 },

    #[error("invalid probability {0}: must lie strictly between 0 and 1")]
    InvalidProbability(f64),

    #[error("invalid alpha {0}: must lie strictly between 0 and 1")]
    InvalidAlpha(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("unknown group label '{0}'")]
    UnknownGroup(String),

    #[error("duplicate assignment of user '{user}' in experiment '{experiment}'")]
    DuplicateAssignment { experiment: String, user: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Finishes an in-memory CSV writer.
pub(crate) fn csv_into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
