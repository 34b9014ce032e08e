//! Error type shared by every module of the crate.

use num_complex::Complex64;
use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (shape, layout, basis mismatch, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Operation not implemented for this input (e.g. boundary rows on a periodic basis).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// LU pivot fell below the relative threshold.
    #[error("singular matrix: pivot {pivot} has magnitude {magnitude:.3e}")]
    Singular { pivot: usize, magnitude: f64 },

    /// Reverse pass attempted with a tape whose leaf bindings have since changed.
    #[error("stale tape: leaf {leaf} was rebound after evaluation")]
    StaleTape { leaf: usize },

    #[error("no convergence after {iterations} iterations (residual history {history:?})")]
    NonConvergence { iterations: usize, history: Vec<f64> },

    #[error("eigenvalue pairing for {eigenvalue} is ambiguous; candidates {candidates:?}")]
    AmbiguousPairing { eigenvalue: Complex64, candidates: Vec<Complex64> },

    #[error("no left eigenvalue pairs with {eigenvalue}")]
    UnpairedEigenvalue { eigenvalue: Complex64 },

    #[error("degenerate eigenvalue: |<Y, M X>| = {overlap:.3e}")]
    DegenerateEigenvalue { overlap: f64 },

    #[error("inconsistent inputs: right-hand side has relative component {residual:.3e} along the left null vector")]
    InconsistentInputs { residual: f64 },

    #[error("checkpoint for step {step} is not available")]
    CheckpointMiss { step: usize },

    #[error("checkpoint capacity {capacity} exceeded")]
    CheckpointCapacity { capacity: usize },

    #[error("Taylor test inconclusive: every remainder is at the roundoff floor")]
    InconclusiveTaylorTest,

    #[error("neutral eigenvalue not found (closest |lambda| = {closest:.3e})")]
    NeutralModeNotFound { closest: f64 },

    #[error("tolerance not met: {what} = {value:.3e} > {tolerance:.3e}")]
    ToleranceNotMet { what: String, value: f64, tolerance: f64 },

    #[error("line search stalled at J = {cost:.6e}")]
    LineSearchStall { cost: f64 },

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
