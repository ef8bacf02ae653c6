use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("received power must be positive, got {0}")]
    NonPositivePower(f64),

    #[error("label {label} out of range for a {n_bits}-bit quantizer")]
    LabelOutOfRange { label: u32, n_bits: u32 },

    #[error("mean gain must be positive, got {0}")]
    NonPositiveMean(f64),

    #[error("modulation matrix rejected: {0}")]
    BadModulation(String),

    #[error("anchor gain {0} is below the usable floor")]
    UnusableAnchor(f64),

    #[error("exploration power {power} exceeds peak power {p_max}")]
    PowerAboveBudget { power: f64, p_max: f64 },

    #[error("channel matrix has zero energy")]
    ZeroEnergy,

    #[error("nothing to write: record list is empty")]
    NoRecords,

    #[error("{aborted} of {total} trials aborted (limit is 1%)")]
    TooManyAborts { aborted: usize, total: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("trace serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
