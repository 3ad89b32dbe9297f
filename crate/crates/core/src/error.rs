use alloc::string::String;

/// Errors reported by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular to working tolerance")]
    Singular,
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
    #[error("no connected topology found after {attempts} draws (radius too small for N)")]
    Disconnected { attempts: u32 },
    #[error("variance at node {node} must be positive, got {value}")]
    NonPositiveVariance { node: usize, value: f64 },
    #[error("unstable recursion: spectral radius {spectral_radius} >= 1")]
    Unstable { spectral_radius: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = core::result::Result<T, Error>;
