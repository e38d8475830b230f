use std::path::PathBuf;

use thiserror::Error;

use crate::tinylm::NeuronId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("duplicate relation name `{0}`")]
    DuplicateRelation(String),

    #[error("concept `{0}` is referenced but not defined")]
    UnknownConcept(String),

    #[error("relation `{relation}` needs {needed} subjects but concept pool has {available}")]
    SubjectPoolExhausted {
        relation: String,
        needed: usize,
        available: usize,
    },

    #[error("infeasible det/eva split: {0}")]
    InfeasibleSplit(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("object `{object}` leaks into prompt `{text}`")]
    ObjectLeak { object: String, text: String },

    #[error("unknown word `{0}`")]
    UnknownWord(String),

    #[error("token id {id} out of vocabulary (size {vocab})")]
    TokenOutOfVocab { id: u32, vocab: usize },

    #[error("sequence length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("sequence too short: {0}")]
    SequenceTooShort(String),

    #[error("empty prompt")]
    EmptyPrompt,

    #[error("neuron {0} is not valid for this model")]
    InvalidNeuron(NeuronId),

    #[error("training diverged at step {step} (loss {loss})")]
    Divergence { step: usize, loss: f64 },

    #[error("labels contain a single class; average precision is undefined")]
    SingleClass,

    #[error("no effective tokens to average over")]
    NoEffectiveTokens,

    #[error("k = {k} out of range 1..={n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("rankings are over different neuron enumerations")]
    MismatchedEnumeration,

    #[error("no negative examples available for `{0}`")]
    NoNegatives(String),

    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: String, expected: String },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated payload: {0}")]
    Truncated(String),

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("invalid data: {0}")]
    Invalid(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// I/O failures map to CLI exit status 2, everything else to 1.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv(e) => e.is_io_error(),
            Error::Json(e) => e.is_io(),
            _ => false,
        }
    }
}
