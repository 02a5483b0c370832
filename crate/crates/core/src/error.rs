use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty training corpus")]
    EmptyCorpus,

    #[error("empty sequence")]
    EmptySequence,

    #[error("empty answer")]
    EmptyAnswer,

    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: usize, size: usize },

    #[error("missing features: {0}")]
    MissingFeatures(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("feature file {path}: {reason}")]
    FeatureFile { path: PathBuf, reason: String },

    #[error("reasoning valid only for odd hop counts (got n_hops={0})")]
    EvenHops(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("all positions masked in {0} attention")]
    AllMasked(&'static str),

    #[error("no ranks to aggregate")]
    NoRanks,

    #[error("non-finite score at candidate {0}")]
    NonFiniteScore(usize),

    #[error("non-finite loss {loss} at step {step} (batch {batch})")]
    NonFiniteLoss {
        step: usize,
        batch: String,
        loss: f64,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("vocabulary fingerprint mismatch: checkpoint {expected}, corpus {found}")]
    VocabMismatch { expected: String, found: String },

    #[error("{0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
