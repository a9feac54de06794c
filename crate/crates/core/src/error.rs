//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Grid too coarse for the requested spectral cutoff.
    #[error("aliasing: grid n={n} cannot represent cutoff K={cutoff} (requires n >= 2K+2)")]
    Aliasing { n: usize, cutoff: usize },

    #[error("non-finite sample in {what}")]
    NonFinite { what: &'static str },

    /// A parameter violated a mathematical constraint.
    #[error("{name} = {value} violates 'requires {constraint}' ({origin})")]
    Constraint {
        name: &'static str,
        value: String,
        constraint: &'static str,
        origin: &'static str,
    },

    #[error("series diverges: {0}")]
    Divergent(String),

    #[error("blow-up at t = {time}: {reason}")]
    BlowUp { time: f64, reason: String },

    #[error("Picard iteration did not contract within {iterations} iterations (last ratio {last_ratio:.3}); horizon too long for this truncation level")]
    NonContraction { iterations: usize, last_ratio: f64 },

    #[error("sample {sample}: {source}")]
    Sample {
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn constraint(
        name: &'static str,
        value: impl ToString,
        constraint: &'static str,
        origin: &'static str,
    ) -> Self {
        Error::Constraint {
            name,
            value: value.to_string(),
            constraint,
            origin,
        }
    }
}
