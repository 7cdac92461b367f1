use std::path::PathBuf;

use thiserror::Error;

/// Invalid or unreadable scenario configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("type mismatch for `{key}`: {reason}")]
    TypeMismatch { key: String, reason: String },
    #[error("malformed override `{0}` (expected KEY=VALUE)")]
    MalformedOverride(String),
    #[error("drive cycle: {0}")]
    Cycle(#[from] CycleError),
}

impl ConfigError {
    pub(crate) fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.to_owned(),
            reason: reason.into(),
        }
    }
}

/// Errors loading a speed-vs-time driving cycle.
#[derive(Debug, Error, PartialEq)]
pub enum CycleError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },
    #[error("cycle needs at least 2 samples, found {0}")]
    TooShort(usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InverterError {
    #[error("vector id {0} out of range 0..=7")]
    InvalidVector(u8),
    #[error("shoot-through on phase {0}: high and low switch both closed")]
    ShootThrough(char),
    #[error("malformed switch code `{0}` (expected 6 binary digits)")]
    MalformedBits(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum TableParseError {
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
    #[error("missing or wrong header (expected `sector,flux_cmd,torque_cmd,vector_id,bits`)")]
    Header,
}

/// The integrator produced a NaN or infinity.
#[derive(Debug, Error, PartialEq, Clone, Copy)]
#[error("non-finite state")]
pub struct NonFiniteState;

/// Failures while running or comparing scenarios.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("non-finite state at electrical step {step} (t = {time} s)")]
    NonFiniteState { step: u64, time: f64 },
    #[error("scenarios are not comparable: {0}")]
    Mismatch(String),
}
