use thiserror::Error;

/// Errors raised by the library. The CLI maps each variant onto an exit code.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric: max asymmetry {max_asymmetry:e} exceeds {tolerance:e}")]
    NotSymmetric { max_asymmetry: f64, tolerance: f64 },

    #[error("matrix is not positive definite: eigenvalue {eigenvalue:e} (largest {largest:e})")]
    NotPositiveDefinite { eigenvalue: f64, largest: f64 },

    #[error("non-finite entry in input")]
    NonFinite,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "Riccati solution lost definiteness (cond(sigma1) = {cond_sigma1:e}, cond(sigma2) = {cond_sigma2:e})"
    )]
    IllConditioned { cond_sigma1: f64, cond_sigma2: f64 },

    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
}

impl Error {
    /// True for errors caused by invalid user input (shape, symmetry, definiteness, arguments).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::NotSquare { .. }
                | Error::NotSymmetric { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::NonFinite
                | Error::InvalidArgument(_)
                | Error::Resource(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
