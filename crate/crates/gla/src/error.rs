use thiserror::Error;

use crate::lattice::Site;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("exact search budget exceeded ({nodes} nodes, cap {cap}); use heuristic mode")]
    BudgetExceeded { nodes: u64, cap: u64 },

    #[error("enumeration cap exceeded ({cap} animals)")]
    CapExceeded { cap: u64 },

    #[error("no closed-form CDF for this distribution family")]
    NoClosedFormCdf,

    #[error("distribution is not bounded below")]
    UnboundedBelow,

    #[error("no white connector between coarse sites {a:?} and {b:?} within the gap budget")]
    MissingConnector { a: Site, b: Site },

    #[error("insufficient samples: need at least {need}, got {got}")]
    InsufficientSamples { need: usize, got: usize },

    #[error("no sign change of the estimate over the bracket [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
