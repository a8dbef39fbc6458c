//! Error type shared by every module in the crate.

use alloc::string::String;

/// Failure modes of construction, estimation, selection, and simulation.
///
/// Variants split into two broad families: data problems (bad values, not
/// enough observations, invalid configuration) and numerical problems
/// (instability, singular matrices, failed solves). Callers that need the
/// distinction can use [`CoreError::is_numerical`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value in {context}")]
    NonFinite {
        /// What was being built or computed when the value appeared.
        context: &'static str,
    },

    /// A constructor or operation was handed structurally invalid input.
    #[error("invalid input: {reason}")]
    InvalidInput {
        /// Human-readable description of the violated requirement.
        reason: String,
    },

    /// Too few observations for the requested lag order.
    ///
    /// Fitting order `p` on `n` observations needs `n - p` regression
    /// columns and `k * p` regressors per equation, so `n - p > k * p`
    /// must hold.
    #[error("insufficient data: n = {n} cannot support order p = {p}")]
    InsufficientData {
        /// Number of observations available.
        n: usize,
        /// Lag order that was requested.
        p: usize,
    },

    /// A column had (numerically) zero variance where a scale was needed.
    #[error("zero variance in column {column}")]
    ZeroVariance {
        /// Zero-based column index.
        column: usize,
    },

    /// Logarithm requested of a value that is not strictly positive.
    #[error("non-positive value at row {row}, column {column}; cannot take logs")]
    NonPositiveValue {
        /// Zero-based row index of the offending entry.
        row: usize,
        /// Zero-based column index of the offending entry.
        column: usize,
    },

    /// The companion matrix has spectral radius at or above one.
    #[error("unstable process: spectral radius {spectral_radius}")]
    UnstableProcess {
        /// Largest eigenvalue modulus of the companion matrix.
        spectral_radius: f64,
    },

    /// The discrete Lyapunov system for the state covariance could not be
    /// solved; the process is too close to the stability boundary.
    #[error("discrete Lyapunov solve failed")]
    LyapunovSolveFailed,

    /// The regression Gram matrix is singular or too ill-conditioned to
    /// invert reliably.
    #[error("singular Gram matrix at order {p} (condition estimate {cond:.3e})")]
    SingularGram {
        /// Lag order whose design produced the Gram matrix.
        p: usize,
        /// One-norm condition estimate at the point of failure.
        cond: f64,
    },

    /// A residual covariance estimate is not positive definite, so its
    /// log-determinant is undefined.
    #[error("singular residual covariance at order {p}")]
    SingularSigma {
        /// Lag order of the offending fit.
        p: usize,
    },

    /// The oracle penalty window collapsed: the population loss does not
    /// strictly decrease up to the stated true order.
    #[error("non-positive oracle window (M = {m})")]
    NonpositiveWindow {
        /// Computed window width `M`.
        m: f64,
    },

    /// A lag index beyond what a sequence or curve holds.
    #[error("lag {p} out of range (have 0..={max})")]
    OrderOutOfRange {
        /// Requested lag or order.
        p: usize,
        /// Largest available lag or order.
        max: usize,
    },

    /// Rejection sampling for a stable coefficient draw gave up.
    #[error("no stable draw after {attempts} attempts")]
    StabilityRejectionExceeded {
        /// Number of rejected draws before giving up.
        attempts: usize,
    },
}

impl CoreError {
    /// True for failures of numerical linear algebra or process stability,
    /// false for data and configuration problems.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            CoreError::UnstableProcess { .. }
                | CoreError::LyapunovSolveFailed
                | CoreError::SingularGram { .. }
                | CoreError::SingularSigma { .. }
                | CoreError::NonpositiveWindow { .. }
                | CoreError::StabilityRejectionExceeded { .. }
        )
    }
}
