use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the geometry, dynamics and verification layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot contract slots {a} and {b}: both have the same variance")]
    ContractVariance { a: usize, b: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("invalid slot {slot} for tensor of rank {rank}")]
    InvalidSlot { slot: usize, rank: usize },

    #[error("degenerate metric: |det g| = {0:e}")]
    DegenerateMetric(f64),

    #[error("invalid conformal factor {0} (must be positive)")]
    InvalidConformalFactor(f64),

    #[error("insufficient stencil: {0}")]
    StencilWidth(String),

    #[error("degenerate surface at node ({i}, {j}): |det gamma| = {det:e}")]
    DegenerateSurface { i: usize, j: usize, det: f64 },

    #[error("no admissible normal seed at node ({i}, {j})")]
    FrameDegeneracy { i: usize, j: usize },

    #[error("frame flip between neighbouring nodes near ({i}, {j}): angle {angle:.3} rad")]
    FrameContinuity { i: usize, j: usize, angle: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("solver did not converge after {iterations} iterations (gradient norm {grad_norm:e}): {reason}")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        reason: String,
    },

    #[error("deformation `{name}` is not tangent to the solution space: linearized residual {residual:e} > {tolerance:e}")]
    NonTangent {
        name: String,
        residual: f64,
        tolerance: f64,
    },

    #[error("form of degree {expected} evaluated on {found} tangent vectors")]
    DegreeMismatch { expected: usize, found: usize },

    #[error("slice tau = {0} lies outside the sheet domain")]
    SliceOutsideDomain(f64),

    #[error("unknown suite `{0}`")]
    UnknownSuite(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
