use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("duplicate annotation for item `{item_id}` by annotator `{annotator_id}`")]
    DuplicateAnnotation {
        item_id: String,
        annotator_id: String,
    },
    #[error("label {label} out of range for K={k} (item `{item_id}`, annotator `{annotator_id}`)")]
    LabelOutOfRange {
        item_id: String,
        annotator_id: String,
        label: usize,
        k: usize,
    },
    #[error("item `{item_id}` is attributed to both agent `{first}` and agent `{second}`")]
    ItemAgentConflict {
        item_id: String,
        first: String,
        second: String,
    },
    #[error("invalid label scheme: {0}")]
    InvalidScheme(String),

    #[error("cannot take the majority of an empty label set")]
    EmptyLabels,

    #[error("all class scores vanished for item `{item_id}`; parameters are corrupt")]
    DegenerateItem { item_id: String },
    #[error("log-likelihood decreased at iteration {iteration}: {previous} -> {current}")]
    NonMonotoneLikelihood {
        iteration: usize,
        previous: f64,
        current: f64,
    },
    #[error("invalid EM configuration: {0}")]
    InvalidEmConfig(String),

    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("agent `{0}` has no items")]
    AgentHasNoItems(String),
    #[error("unknown annotator `{0}`")]
    UnknownAnnotator(String),
    #[error("method {0} requires a fitted EM result")]
    MissingEmResult(&'static str),
    #[error("bootstrap iteration count must be at least 1")]
    InvalidBootstrap,

    #[error("score vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("ranking needs at least two entries, got {0}")]
    TooFewEntries(usize),
    #[error("ranking is degenerate: every score is tied")]
    DegenerateRanking,
    #[error("annotator subset size {m} is invalid for a pool of {pool}")]
    SubsetTooSmall { m: usize, pool: usize },
    #[error("invalid stability configuration: {0}")]
    InvalidStabilityConfig(String),

    #[error("invalid {archetype} parameter: {reason}")]
    InvalidArchetypeParam {
        archetype: &'static str,
        reason: String,
    },
    #[error("invalid synthetic configuration: {0}")]
    InvalidSynthConfig(String),
    #[error("estimated and true score sets cover different agents")]
    AgentSetMismatch,
    #[error("unknown ablation axis `{0}`")]
    UnknownAxis(String),

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("row {row}: unknown winner token `{token}`")]
    UnknownWinnerToken { row: usize, token: String },
    #[error("row {row}: unknown severity `{value}`")]
    UnknownSeverity { row: usize, value: String },
    #[error("row {row}: unknown label `{value}`")]
    UnknownLabel { row: usize, value: String },
    #[error("row {row}: facet `{facet}` value {value} outside [0, 2]")]
    FacetOutOfRange {
        row: usize,
        facet: String,
        value: f64,
    },
    #[error("unknown dataset `{0}` (expected one of: mtbench, convabuse, qags, mslr)")]
    UnknownDataset(String),

    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::DegenerateItem { .. } | Error::NonMonotoneLikelihood { .. } => {
                ErrorKind::Numerical
            }
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
