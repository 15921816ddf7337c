use thiserror::Error;

/// Failures raised anywhere in the numerical pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("variable x{index} out of range at offset {offset} (dimension {dim})")]
    VariableOutOfRange {
        index: usize,
        dim: usize,
        offset: usize,
    },

    #[error("domain error in {op}: argument {arg}")]
    EvalDomain { op: &'static str, arg: f64 },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown builtin domain `{0}`")]
    UnknownDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point is not on the boundary: |F| = {residual:e} exceeds {tol:e}")]
    NotOnBoundary { residual: f64, tol: f64 },

    #[error("critical boundary point: |grad F| = {grad_norm:e}")]
    CriticalBoundaryPoint { grad_norm: f64 },

    #[error("nearest-point solver failed: {0}")]
    NonConvergence(String),

    #[error("focal point: 1 - t*kappa = {denominator:e} is not positive")]
    FocalPoint { denominator: f64 },

    #[error("stencil touches the medial axis near {0:?}")]
    MedialStencil(Vec<f64>),

    #[error("ball of radius {radius} does not fit inside the domain (distance {distance})")]
    BallNotContained { radius: f64, distance: f64 },

    #[error("empty interior grid")]
    EmptyGrid,

    #[error("basis is not orthonormal (defect {0:e})")]
    NonOrthonormalBasis(f64),

    #[error("odd ambient dimension {0} has no complex structure")]
    OddDimension(usize),

    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
