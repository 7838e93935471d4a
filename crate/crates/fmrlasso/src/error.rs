//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by model construction, fitting and selection.
#[derive(Error, Debug)]
pub enum FmrError {
    /// Input data or parameters fail a structural precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Matrix/vector dimensions do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A mixture component lost essentially all responsibility mass.
    #[error("component {component} collapsed at iteration {iteration}: responsibility mass {mass:.3e}")]
    DegenerateComponent {
        component: usize,
        iteration: usize,
        mass: f64,
    },

    /// Adaptive stage started from an all-zero coefficient estimate, which
    /// freezes every coordinate at zero.
    #[error("degenerate initialization: initial estimate has no nonzero coefficients")]
    DegenerateInitialization,

    /// A cross-validation fold fit failed.
    #[error("fold {fold} failed: {source}")]
    FoldFailed {
        fold: usize,
        #[source]
        source: Box<FmrError>,
    },

    /// Every cell of a selection grid failed.
    #[error("all {0} grid cells failed; no model selected")]
    AllCellsFailed(usize),
}

pub type Result<T> = std::result::Result<T, FmrError>;
