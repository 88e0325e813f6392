use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The killed generator is singular: the set has no exit to the
    /// Dirichlet region.
    #[error("transience required: {0}")]
    NotTransient(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("dimension {dim} exceeds the spectral cap {cap}")]
    SpectralCap { dim: usize, cap: usize },

    #[error("no corkscrew point for boundary vertex {xi} at radius {r}")]
    NoCorkscrew { xi: usize, r: f64 },

    #[error("scale function not increasing at vertex {xi} (radius {r}); mesh too coarse")]
    NonMonotoneScale { xi: usize, r: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
