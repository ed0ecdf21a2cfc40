use thiserror::Error;

use crate::MultiIndex;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid {0:?} is too small for the quasi-interpolant: every axis needs at least 11 cubes")]
    GridTooSmall([usize; 3]),

    #[error("cube {cube:?} lies outside a grid of {dims:?} cubes")]
    CubeOutOfRange { cube: MultiIndex, dims: [usize; 3] },

    #[error("point {0:?} lies outside the domain")]
    PointOutsideDomain([f64; 3]),

    #[error("degenerate tetrahedron")]
    DegenerateTetrahedron,

    #[error("index {0:?} is not a member of the index set")]
    NotInIndexSet(MultiIndex),

    #[error("data index {0:?} falls outside the data point set")]
    DataIndexOutOfRange(MultiIndex),

    #[error("sample field has {got} values, expected {expected}")]
    IncompleteSamples { expected: usize, got: usize },

    #[error("stencil for class {key:?} fails validation: {reason}")]
    StencilValidation { key: MultiIndex, reason: String },

    #[error("box-spline interpolation system is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),

    #[error("compiled field needs {needed} bytes, which exceeds the budget of {budget} bytes")]
    TooLarge { needed: u64, budget: u64 },

    #[error("size mismatch: got {got}, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("unknown test function `{0}`")]
    UnknownFunction(String),

    #[error("derivative order {0:?} is not supported (total order must be at most 3)")]
    DerivativeOrder([u32; 3]),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
