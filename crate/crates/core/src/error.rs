use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular input: det F = {det:.3e} (expected > 0)")]
    SingularInput { det: f64 },

    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("invalid mesh specification: {0}")]
    InvalidMeshSpec(String),

    #[error("mesh parse error at line {line}: {message}")]
    MeshParse { line: usize, message: String },

    #[error("malformed mesh: {0}")]
    MalformedMesh(String),

    #[error("linear solve did not converge after {iterations} iterations (relative residual {:.3e})", .history.last().copied().unwrap_or(f64::NAN))]
    LinearSolve { iterations: usize, history: Vec<f64> },

    #[error("matrix is not positive definite (pivot {index} = {pivot:.3e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("slice {slice} at x1 = {x1:.6} is too degenerate to extract a rotation (det = {det:.3e})")]
    DegenerateSlice { slice: usize, x1: f64, det: f64 },

    #[error(transparent)]
    Optimization(#[from] crate::optim::OptimError),

    #[error("3d minimization failed: {source} (min det of scaled gradient {min_det:.3e})")]
    Solve3d {
        source: crate::optim::OptimError,
        min_det: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
