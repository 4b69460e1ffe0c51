use thiserror::Error;

/// Workspace-wide error type. Variants are grouped so callers can map them to
/// process exit codes: input/validation problems vs. numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input: bad config values, hypothesis violations, malformed files.
    #[error("validation: {0}")]
    Validation(String),

    /// Mesh construction or mesh-quality failure.
    #[error("mesh: {0}")]
    Mesh(String),

    /// Adaptive quadrature stopped above the requested tolerance.
    #[error("quadrature did not converge: estimated error {achieved:.3e} exceeds tolerance {tol:.3e}")]
    Quadrature { achieved: f64, tol: f64 },

    /// Newton iteration failed; carries the best iterate seen and its residual.
    #[error("newton: {reason} (best residual {residual:.3e} after {iterations} iterations)")]
    Newton {
        reason: String,
        residual: f64,
        iterations: usize,
        best: Vec<f64>,
    },

    /// Iterative linear or nonlinear solver failure.
    #[error("solver: {0}")]
    Solver(String),

    /// Eigensolver failed to converge or to certify residuals.
    #[error("eigensolver: {0}")]
    Eigen(String),

    /// Min-max path collapsed to a trivial level.
    #[error("degenerate min-max: {0}")]
    Degenerate(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse: {0}")]
    ConfigParse(String),

    #[error("report serialization: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Mesh(_) | Error::ConfigParse(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
