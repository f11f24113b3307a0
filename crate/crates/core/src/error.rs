use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid {field}: {rule}")]
    Invariant { field: &'static str, rule: String },

    #[error("operation requires a {expected} block, got {actual}")]
    UnsupportedBlock {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("tensor-parallel flavor {flavor} is not defined for {block} blocks")]
    UnsupportedFlavor {
        flavor: &'static str,
        block: &'static str,
    },

    #[error("collective group size must be at least 1")]
    InvalidGroup,

    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),

    #[error("overlap efficiency must lie in [0, 1], got {0}")]
    InvalidOverlap(f64),

    #[error("chunk size {chunk} does not divide sequence length {seq}")]
    Chunking { seq: u64, chunk: u64 },

    #[error("sequence lengths differ: {0}")]
    LengthMismatch(String),

    #[error("arithmetic intensity is undefined for zero bytes moved")]
    UndefinedIntensity,

    #[error("peak rate must be positive, got {0}")]
    InvalidPeak(f64),

    #[error("output token count must be at least 1")]
    NoOutputTokens,

    #[error("elapsed time must be positive, got {0}")]
    InvalidDuration(f64),

    #[error("parallel degrees {dp}x{pp}x{tp}x{cp}: product {product} != world {world}")]
    Binding {
        dp: u32,
        pp: u32,
        tp: u32,
        cp: u32,
        product: u64,
        world: u64,
    },

    #[error("unknown reference table {0:?}")]
    UnknownReference(String),

    #[error("reference table {id}: {message}")]
    Reference { id: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invariant(field: &'static str, rule: impl Into<String>) -> Self {
        Error::Invariant {
            field,
            rule: rule.into(),
        }
    }
}
