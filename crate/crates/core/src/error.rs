use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (deviation {deviation:.3e} > {tol:.3e})")]
    NotHermitian { deviation: f64, tol: f64 },

    #[error("matrix is not positive semidefinite (minimum eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },

    #[error("not a density matrix: {0}")]
    NotDensity(String),

    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("matrix is singular")]
    Singular,

    #[error("non-finite entry in matrix")]
    NonFinite,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("direction is not in the tangent cone: {0}")]
    NotInCone(String),

    #[error("path sample {index} is not in the tangent cone")]
    PathSampleNotInCone { index: usize },

    #[error("replacer step underflow: epsilon {0:.3e} too small, rescale the tangent vector")]
    EpsilonUnderflow(f64),

    #[error("ball of radius {0} around sigma does not fit in the state space")]
    BallOutsideStateSpace(f64),

    #[error("transport solver failed at pair {pair}: {reason}")]
    RootSolve { pair: usize, reason: String },

    #[error("ratio ledger violated at step {step}")]
    LedgerViolation { step: usize },

    #[error("eigendecomposition failed to converge")]
    NoConvergence,
}

impl Error {
    /// Stable machine-readable code, used in CLI error reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::NotHermitian { .. } => "not_hermitian",
            Error::NotPsd { .. } => "not_psd",
            Error::NotDensity(_) => "not_density",
            Error::NotUnitary(_) => "not_unitary",
            Error::Singular => "singular",
            Error::NonFinite => "non_finite",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::NotInCone(_) => "not_in_cone",
            Error::PathSampleNotInCone { .. } => "path_sample_not_in_cone",
            Error::EpsilonUnderflow(_) => "epsilon_underflow",
            Error::BallOutsideStateSpace(_) => "ball_outside_state_space",
            Error::RootSolve { .. } => "root_solve",
            Error::LedgerViolation { .. } => "ledger_violation",
            Error::NoConvergence => "no_convergence",
        }
    }

    /// True for errors that are bugs in the library rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(
            self,
            Error::LedgerViolation { .. } | Error::NoConvergence | Error::RootSolve { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
