use thiserror::Error;

use crate::mdp::ValidationReport;

pub type Result<T, E = VarMdpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum VarMdpError {
    #[error("malformed model: {0}")]
    Malformed(String),

    #[error("invalid model:\n{0}")]
    Invalid(ValidationReport),

    #[error("probability level must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),

    #[error("policy is not admissible: {0}")]
    InadmissiblePolicy(String),

    /// The policy-induced chain has several recurrent classes.
    #[error("policy {policy:?} induces {} recurrent classes", classes.len())]
    Multichain {
        policy: Vec<usize>,
        classes: Vec<Vec<usize>>,
    },

    #[error("policy {policy:?} induces a periodic recurrent class (period {period})")]
    Periodic { policy: Vec<usize>, period: usize },

    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("outer iteration cap of {cap} exceeded")]
    IterationCapExceeded { cap: usize },

    #[error("enumeration size {size} exceeds cap {cap}")]
    CapExceeded { size: u128, cap: u128 },

    #[error("model has no declared reward resolution (or a reward is off its grid)")]
    MissingResolution,

    #[error("remaining goal {lambda} left the grid at stage {stage}, state {state}")]
    GridUnderflow {
        stage: usize,
        state: usize,
        lambda: i64,
    },

    #[error("state {state} has no admissible action")]
    InfeasibleState { state: usize },

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("unsupported instance schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
