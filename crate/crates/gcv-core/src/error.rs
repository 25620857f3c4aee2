use core::fmt;

/// Errors reported by model builders, filters, and solvers.
#[derive(Debug, Clone, PartialEq)]
#[non_exhaustive]
pub enum Error {
    /// An argument violated a documented precondition.
    InvalidArgument {
        arg: &'static str,
        reason: &'static str,
    },
    /// Two inputs that must agree in dimension do not.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A sampling schedule is not strictly increasing at the given position.
    NonIncreasingTimestamps { index: usize },
    /// A regressor row has the wrong length.
    RegressorLengthMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    /// A covariance input is not symmetric PSD within tolerance.
    NotSymmetricPsd { what: &'static str },
    /// Empty input where at least one element is required.
    EmptyInput { what: &'static str },
    /// The model's schedule or regressor list cannot supply matrices for the
    /// requested step.
    HorizonExhausted { step: usize, max_steps: usize },
    /// Innovation variance C P C' + gamma came out non-positive; impossible
    /// for valid inputs, so this flags internal state corruption.
    NonPositiveInnovationVariance { step: usize },
    /// A fixed-point solver did not meet its tolerance within the budget.
    NoConvergence { what: &'static str, budget: usize },
    /// Spectral radius at or above one where a contraction is required.
    UnstableClosedLoop { spectral_radius: f64 },
    /// A matrix that must be positive definite failed to factor.
    FactorizationFailed { what: &'static str },
    /// t - dof too close to zero; the GCV score is undefined.
    DegenerateScore { t: usize, dof: f64 },
    /// A smoother prediction covariance was singular at the given step.
    SingularPrediction { step: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument { arg, reason } => {
                write!(f, "invalid argument `{arg}`: {reason}")
            }
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "dimension mismatch in {what}: expected {expected}, found {found}"),
            Error::NonIncreasingTimestamps { index } => {
                write!(f, "timestamps must be strictly increasing (violated at index {index})")
            }
            Error::RegressorLengthMismatch {
                index,
                expected,
                found,
            } => write!(
                f,
                "regressor {index} has length {found}, expected {expected}"
            ),
            Error::NotSymmetricPsd { what } => {
                write!(f, "{what} must be symmetric positive semidefinite")
            }
            Error::EmptyInput { what } => write!(f, "{what} must be nonempty"),
            Error::HorizonExhausted { step, max_steps } => write!(
                f,
                "model supplies matrices for at most {max_steps} measurements, step {step} requested"
            ),
            Error::NonPositiveInnovationVariance { step } => {
                write!(f, "non-positive innovation variance at step {step}")
            }
            Error::NoConvergence { what, budget } => {
                write!(f, "{what} did not converge within {budget} iterations")
            }
            Error::UnstableClosedLoop { spectral_radius } => {
                write!(f, "spectral radius {spectral_radius} is not below one")
            }
            Error::FactorizationFailed { what } => {
                write!(f, "{what} is not positive definite (factorization failed)")
            }
            Error::DegenerateScore { t, dof } => {
                write!(f, "GCV undefined at t = {t}: t - dof = {:.3e}", *t as f64 - dof)
            }
            Error::SingularPrediction { step } => {
                write!(f, "singular prediction covariance at smoother step {step}")
            }
        }
    }
}

impl core::error::Error for Error {}
