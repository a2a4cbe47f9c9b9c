use thiserror::Error;

/// Errors raised by the regression, model-selection and simulation routines.
#[derive(Debug, Error)]
pub enum FofrError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("sample mismatch: {0}")]
    SampleMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("covariance is not symmetric (max deviation {max_dev:.3e} exceeds {tol:.1e})")]
    Asymmetric { max_dev: f64, tol: f64 },

    #[error(
        "Gram matrix H is numerically singular (reciprocal condition {rcond:.3e} < {threshold:.0e}); \
         use the stabilized estimator or a smaller p"
    )]
    SingularSystem { rcond: f64, threshold: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("requested p = {requested} exceeds the admissible rank; largest admissible p is {max_admissible}")]
    Rank {
        requested: usize,
        max_admissible: usize,
    },

    #[error("covariance is not positive semidefinite: factorization failed at jitter {jitter:.1e}")]
    NotPsd { jitter: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Parse,
    Numerical,
    Shape,
    Other,
}

impl FofrError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            FofrError::Parse(_) | FofrError::Io(_) | FofrError::Config(_) => ErrorKind::Parse,
            FofrError::SingularSystem { .. }
            | FofrError::NotPsd { .. }
            | FofrError::Degenerate(_)
            | FofrError::Rank { .. }
            | FofrError::Asymmetric { .. } => ErrorKind::Numerical,
            FofrError::GridMismatch(_) | FofrError::SampleMismatch(_) => ErrorKind::Shape,
            FofrError::InvalidGrid(_) | FofrError::InvalidInput(_) => ErrorKind::Other,
        }
    }
}

pub type Result<T> = std::result::Result<T, FofrError>;
