use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the corpus, aligner, metric, and lab modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected exactly one \"|||\" separator")]
    MalformedLine { path: PathBuf, line: usize },
    #[error("{path}:{line}: empty {side} side")]
    EmptySide {
        path: PathBuf,
        line: usize,
        side: &'static str,
    },
    #[error("line counts differ: {src_path} has {src_lines}, {tgt_path} has {tgt_lines}")]
    LineCountMismatch {
        src_path: PathBuf,
        src_lines: usize,
        tgt_path: PathBuf,
        tgt_lines: usize,
    },
    #[error("{path}:{line}: {msg}")]
    ParseLine {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("expected {expected} replacement targets, got {got}")]
    TargetCountMismatch { expected: usize, got: usize },
    #[error("replacement target at index {index} is empty")]
    EmptyTarget { index: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("tension must be positive, got {0}")]
    NonPositiveTension(f64),
    #[error("null probability must lie in [0, 1), got {0}")]
    InvalidNullProb(f64),
    #[error("expected {expected} alignments, got {got}")]
    AlignmentCountMismatch { expected: usize, got: usize },
    #[error("pair {index}: identity alignment needs equal lengths (src {src_len}, tgt {tgt_len})")]
    IdentityLengthMismatch {
        index: usize,
        src_len: usize,
        tgt_len: usize,
    },
    #[error("pair {index}: alignment refers to out-of-range position")]
    AlignmentOutOfRange { index: usize },
    #[error("pair {index}: duplicate link for target position {position}")]
    DuplicateLink { index: usize, position: usize },
    #[error("no source words left to evaluate after filtering")]
    NoCountedWords,
    #[error("histogram needs at least one bin")]
    ZeroBins,
    #[error("histogram range is inverted or empty: [{lo}, {hi}]")]
    InvertedRange { lo: f64, hi: f64 },
    #[error("need at least two languages, got {0}")]
    TooFewLanguages(usize),
    #[error("language {0:?} has no tokens")]
    EmptyLanguage(String),
    #[error("cannot score an empty sentence")]
    EmptySentence,
    #[error("ternary coordinates require exactly 3 languages, got {0}")]
    TernaryNeedsThree(usize),
    #[error("invalid HMM shape: K={k}, V={v} (both must be >= 1)")]
    InvalidHmmShape { k: usize, v: usize },
    #[error("sampling bounds must satisfy 0 < a and 0 < b, got a={a}, b={b}")]
    InvalidSamplingBounds { a: f64, b: f64 },
    #[error("invalid length range [{lo}, {hi}]")]
    InvalidLengthRange { lo: usize, hi: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sequence {index}: symbol {symbol} out of range for V={v}")]
    SymbolOutOfRange {
        index: usize,
        symbol: usize,
        v: usize,
    },
    #[error("sequence {index}: label {label} out of range for K={k}")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        k: usize,
    },
    #[error("enumeration instance too large: K^T = {states}^{len} exceeds {limit}")]
    InstanceTooLarge {
        states: usize,
        len: usize,
        limit: u64,
    },
    #[error("beam width must be >= 1")]
    ZeroBeamWidth,
    #[error("top-k width must lie in [1, K={k}], got {got}")]
    InvalidTopK { got: usize, k: usize },
    #[error("datasets disagree on K/V: ({k1}, {v1}) vs ({k2}, {v2})")]
    DatasetShapeMismatch {
        k1: usize,
        v1: usize,
        k2: usize,
        v2: usize,
    },
    #[error("invalid training configuration: {0}")]
    InvalidTrainConfig(String),
    #[error("experiment needs at least one seed")]
    NoSeeds,
    #[error("reborn loop needs at least one iteration")]
    NoIterations,
    #[error("unsupported schema version {found:?} (expected {expected})")]
    SchemaVersion { expected: String, found: String },
    #[error("malformed model file {path}: {msg}")]
    MalformedModel { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
