//! Error type shared by all numerical modules.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The data model is generic in the torus dimension, the algorithms are not.
    #[error("torus dimension {d} is not supported (all algorithms target d = 2)")]
    UnsupportedDimension { d: usize },

    #[error("invalid map specification: {0}")]
    InvalidMap(String),

    #[error("linear part is not hyperbolic: {0}")]
    NotHyperbolic(String),

    /// Inverse-map iteration failed to reach the requested residual.
    #[error("inverse map did not converge: residual {residual:.3e} > tol {tol:.3e} ({detail})")]
    NonConvergence {
        residual: f64,
        tol: f64,
        detail: String,
    },

    /// det(A^n - Id) = 0: the fixed-point lattice is degenerate.
    #[error("degenerate period-{n} equation: det(A^n - Id) = 0")]
    Degenerate { n: u32 },

    #[error("orbit continuation failed for lift class k = {k:?}: {detail}")]
    ContinuationFailure { k: Vec<i64>, detail: String },

    #[error("continued points for k = {k1:?} and k = {k2:?} collide (distance {dist:.3e})")]
    CollisionDetected {
        k1: Vec<i64>,
        k2: Vec<i64>,
        dist: f64,
    },

    #[error("cache digest mismatch: expected {expected}, found {found}")]
    DigestMismatch { expected: String, found: String },

    #[error("cache schema mismatch: {0}")]
    SchemaMismatch(String),

    /// |det(Id - DT^n(x))| below the hyperbolicity floor.
    #[error("singular monodromy: |det(Id - DT^n)| = {det:.3e} at a periodic point")]
    SingularMonodromy { det: f64 },

    #[error("trace table holds n <= {have}, determinant truncation needs n <= {need}")]
    InsufficientTraces { have: u32, need: u32 },

    /// The closest-integer bracket [r/2] is ambiguous at half-integers.
    #[error("smoothness r = {r} puts r/2 exactly between integers; refusing to round")]
    AmbiguousRounding { r: f64 },

    #[error("root iteration stalled: residual {residual:.3e} above target {target:.3e}")]
    RootIterationStall { residual: f64, target: f64 },

    /// The quadrature grid does not resolve the mollifier (m * eps < 8).
    #[error("grid with m = {m} does not resolve mollifier width eps = {epsilon} (need m*eps >= 8)")]
    GridTooCoarse { m: usize, epsilon: f64 },

    #[error("extrapolation ladder is not monotone: {0}")]
    NonMonotone(String),

    #[error("log-linear fit needs at least 4 usable remainder points, got {usable}")]
    DegenerateFit { usable: usize },

    #[error("eigensolver failure: {0}")]
    EigenFailure(String),

    #[error("sigma = {sigma:.6} is within the configured gap of eigenvalue modulus {modulus:.6}")]
    SigmaOnEigenvalue { sigma: f64, modulus: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("orbit set failed validation: {0}")]
    ValidationFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics themselves, as opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::ContinuationFailure { .. }
                | Error::CollisionDetected { .. }
                | Error::SingularMonodromy { .. }
                | Error::RootIterationStall { .. }
                | Error::NonMonotone(_)
                | Error::EigenFailure(_)
                | Error::ValidationFailed(_)
                | Error::Degenerate { .. }
        )
    }
}
