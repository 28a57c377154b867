use thiserror::Error;

/// Errors produced anywhere in the solver library.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid spline parameters: degree {p}, continuity {k}, level {level} ({reason})")]
    InvalidSplineParameters {
        p: usize,
        k: i64,
        level: usize,
        reason: String,
    },

    #[error("evaluation point {x} outside [0,1]")]
    PointOutsideDomain { x: f64 },

    #[error("spaces are not nested: {0}")]
    NotNested(String),

    #[error("index {index:?} is masked or out of range")]
    InvalidIndex { index: Vec<usize> },

    #[error("geometry map is singular at {point:?} (det = {det})")]
    SingularGeometry { point: Vec<f64>, det: f64 },

    #[error("observation region is not aligned with the knot lines at this level")]
    RegionNotKnotAligned,

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("preconditioner inner product is not positive (breakdown)")]
    PreconditionerNotSpd,

    #[error("smoother encountered a zero or singular diagonal block")]
    SingularSmootherBlock,

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
