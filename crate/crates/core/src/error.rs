use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm {norm:e} is below the normalization floor")]
    ZeroNorm { norm: f64 },
    #[error("non-finite value at component {index}")]
    NonFinite { index: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("concept bank has no ID concepts")]
    EmptyBank,
    #[error("duplicate ID label {0:?}")]
    DuplicateLabel(String),
    #[error("label count {labels} does not match row count {rows}")]
    LabelCount { labels: usize, rows: usize },
    #[error("need {needed} agents but the pool holds {available}")]
    InsufficientAgents { needed: usize, available: usize },
    #[error("invalid agent ratio k={0}")]
    BadRatio(f64),
    #[error("target TPR {0} outside (0, 1]")]
    BadTpr(f64),
    #[error("temperature must be finite and > 0, got {0}")]
    BadTau(f64),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("regression needs at least 3 samples in range, got {0}")]
    TooFewSamples(usize),
    #[error("regressor is constant over the selected range")]
    ConstantRegressor,
    #[error("banks do not share an identical ID part")]
    IdMismatch,
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("invalid synthetic spec: {0}")]
    BadSpec(String),
    #[error("need at least 2 agent sets, got {0}")]
    TooFewSets(usize),
    #[error("bad magic {0:?}, expected \"CMAE\"")]
    BadMagic([u8; 4]),
    #[error("unsupported CMAE version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported CMAE dtype {0}")]
    UnsupportedDtype(u8),
    #[error("invalid CMAE header: {0}")]
    BadHeader(String),
    #[error("truncated payload: header declares {expected} bytes, file holds {found}")]
    TruncatedPayload { expected: u128, found: u128 },
    #[error("unsupported report format {0:?}")]
    UnsupportedFormat(String),
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for data/format problems, 3 for
    /// internal invariant violations. Usage errors (1) never reach here.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invariant(_) => 3,
            _ => 2,
        }
    }
}
