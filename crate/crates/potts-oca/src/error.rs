use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An exact-enumeration oracle was asked for a state space larger
    /// than its guard allows.
    #[error("capacity error: enumeration over {states} states (K={k_states}, n={sites}) exceeds the guard of {limit} states")]
    Capacity {
        k_states: usize,
        sites: usize,
        states: f64,
        limit: f64,
    },

    /// An objective or density evaluated to a non-finite value.
    #[error("numerical error: non-finite objective at beta={beta}")]
    NonFinite { beta: f64 },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
