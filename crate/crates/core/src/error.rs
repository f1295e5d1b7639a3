use thiserror::Error;

/// Errors raised by model construction, simulation and classification.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("drift field out of range: |phi({x}, {t})| = {value} exceeds 1/2")]
    DriftOutOfRange { x: f64, t: f64, value: f64 },

    #[error("signed (mean-reverting) drift field is not accepted here: {0}")]
    SignedField(&'static str),

    #[error("only mean-reverting drift fields have a stationary occupancy")]
    NotErgodic,

    #[error("events out of order at index {index}: {prev} then {next}")]
    MalformedEvents { index: usize, prev: f64, next: f64 },

    #[error("non-positive averaged rate at cell {n}: lambda* = {lambda}, mu* = {mu}")]
    NonPositiveRate { n: i64, lambda: f64, mu: f64 },

    #[error("lambda* < mu* at cell {n} (ratio {ratio}); criterion requires lambda* >= mu* in the tail")]
    SettingViolated { n: i64, ratio: f64 },

    #[error("index {n} is outside the chain window [{n_min}, {n_max}]")]
    OutOfWindow { n: i64, n_min: i64, n_max: i64 },

    #[error("chain has no analytic extension beyond n = {n_max}")]
    NotExtendable { n_max: i64 },

    #[error("window mismatch: {0}")]
    WindowMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
