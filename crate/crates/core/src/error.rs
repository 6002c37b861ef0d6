use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while lexing or parsing tactic scripts.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unbalanced delimiters: {0}")]
    UnbalancedDelimiters(String),
    #[error("no tactic found in proof")]
    EmptyProof,
}

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("division by zero: length improvement needs a non-zero baseline")]
    DivisionByZero,
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("invalid metric definition: {0}")]
    Invalid(String),
    #[error("failed to read metric registry {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse metric registry: {0}")]
    Toml(#[from] toml::de::Error),
}

#[derive(Debug, Error)]
pub enum VerifierError {
    #[error("verifier backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("verification timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("verifier protocol error: {0}")]
    ProtocolError(String),
    #[error("verifier cache i/o error: {0}")]
    Cache(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum CosError {
    #[error("{states} states supplied for a proof with {tactics} tactics")]
    AlignmentError { states: usize, tactics: usize },
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("bad chunking config: overlap {overlap} must be smaller than max_chunk {max_chunk}")]
    BadConfig { max_chunk: usize, overlap: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("vector store missing: {0}")]
    StoreMissing(String),
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(String),
    #[error("store i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("failed to decode model output: {0}")]
    DecodeError(String),
    #[error("no proof found in model output")]
    NoProofFound,
    #[error("generator backend exhausted after {attempts} attempts: {last}")]
    BackendExhausted { attempts: usize, last: String },
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Verifier(#[from] VerifierError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no theorems found under {0}")]
    NoTheoremsFound(PathBuf),
    #[error("{} input proof(s) failed verification: {}", .0.len(), .0.join(", "))]
    IngestVerificationFailed(Vec<String>),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("declaration `{0}` not found")]
    UnknownDeclaration(String),
    #[error("bad manifest: {0}")]
    Manifest(String),
    #[error("bad ablation grid: {0}")]
    Grid(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Verifier(#[from] VerifierError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}
