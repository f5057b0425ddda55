use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // model-io
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected \"SWFT1\"")]
    BadMagic,
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("shape mismatch for {name}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("non-finite weight in {0}")]
    NonFiniteWeight(String),
    #[error("planted sublayer index {index} out of range for {sublayers} sublayers")]
    BadPlantIndex { index: usize, sublayers: usize },
    #[error("invalid architecture: {0}")]
    InvalidConfig(String),
    #[error("cannot tokenize: {0}")]
    Tokenize(String),

    // transformer-core
    #[error("cache overflow: need {needed} slots/positions, capacity {capacity}")]
    CacheOverflow { needed: usize, capacity: usize },
    #[error("layer mask has length {got}, model has {expected} sublayers")]
    MaskLengthMismatch { expected: usize, got: usize },
    #[error("node {node} has a dangling ancestor reference")]
    DanglingAncestor { node: usize },
    #[error("stale cache mark")]
    StaleMark,
    #[error("invalid commit: {0}")]
    InvalidCommit(String),
    #[error("token {token} outside vocabulary of {vocab}")]
    BadToken { token: u32, vocab: usize },
    #[error("empty token input")]
    EmptyInput,
    #[error("non-finite input")]
    NonFiniteInput,

    // draft / verify
    #[error("value {0} out of range")]
    OutOfRange(f64),
    #[error("empty draft tree")]
    EmptyTree,
    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("rejection with an all-zero residual distribution")]
    DegenerateResidual,

    // optimizer
    #[error("skip ratio {ratio} invalid for {sublayers} sublayers")]
    RatioTooLarge { ratio: f64, sublayers: usize },
    #[error("need {need} generated context tokens, have {have}")]
    InsufficientContext { have: usize, need: usize },

    // orchestration / harness
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("bad config: {0}")]
    Config(String),
    #[error("output diverged from the vanilla baseline")]
    Diverged,
    #[error("expected speedup undefined: zero denominator")]
    DivZero,
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse classification used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::RatioTooLarge { .. } | Error::BadRequest(_) => {
                ErrorKind::Config
            }
            Error::Io { .. }
            | Error::BadMagic
            | Error::BadHeader(_)
            | Error::MissingTensor(_)
            | Error::ShapeMismatch { .. }
            | Error::NonFiniteWeight(_)
            | Error::InvalidConfig(_)
            | Error::BadPlantIndex { .. }
            | Error::Tokenize(_)
            | Error::Dataset(_)
            | Error::MalformedRecord { .. } => ErrorKind::Data,
            _ => ErrorKind::Engine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Engine,
}
