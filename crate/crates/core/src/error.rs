use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("layer {layer}: dimension mismatch, {detail}")]
    DimensionMismatch { layer: usize, detail: String },

    #[error("layer {layer}: unknown activation `{name}`")]
    UnknownActivation { layer: usize, name: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("input length mismatch: expected {expected}, got {actual}")]
    InputLength { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("distribution does not match feature spec: {0}")]
    DistributionMismatch(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("degenerate range: all {count} values equal {value}, cannot split into {k} bins")]
    DegenerateRange { value: f64, count: usize, k: usize },

    #[error("k-means: requested {k} clusters but only {distinct} distinct points")]
    TooFewPoints { k: usize, distinct: usize },

    #[error("no discretizer for target {0}")]
    MissingDiscretizer(String),

    #[error("unknown target {0}")]
    UnknownTarget(String),

    #[error("unknown state {0}")]
    UnknownState(String),

    #[error("value {value} of target {target} maps to no abstract state")]
    UnmappedValue { target: String, value: f64 },

    #[error("reachability solver did not converge (residual {residual:e})")]
    NonConvergence { residual: f64 },

    #[error("group {group} received no samples; increase n_eval")]
    EmptyGroup { group: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
