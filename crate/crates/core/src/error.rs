use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("line {line}: duplicate term {surface:?}")]
    DuplicateTerm { line: usize, surface: String },

    #[error("line {line}: duplicate modifier {surface:?}")]
    DuplicateModifier { line: usize, surface: String },

    #[error("line {line}: unknown modifier category {value:?}")]
    UnknownCategory { line: usize, value: String },

    #[error("line {line}: score {value} is outside [-1, 1]")]
    ScoreOutOfRange { line: usize, value: f64 },

    #[error("score {value} for {term:?} is outside [-1, 1]")]
    InvalidScore { term: String, value: f64 },

    #[error("design infeasible: {0}")]
    DesignInfeasible(String),

    #[error("response references unknown tuple {0:?}")]
    UnknownTuple(String),

    #[error("invalid response {response_id:?}: {reason}")]
    InvalidResponse { response_id: String, reason: String },

    #[error("no responses to score")]
    EmptyResponses,

    #[error("no latent score for term {0:?}")]
    MissingLatent(String),

    #[error("pair ({0:?}, {1:?}) has a term missing from the lexicon")]
    MissingPairScore(String, String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("campaign: {0}")]
    Campaign(String),

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
