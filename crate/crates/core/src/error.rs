//! Error taxonomy shared by the whole crate.
//!
//! The CLI maps these variants onto process exit codes, so the split between
//! variants is part of the external contract: a failed certificate *verdict*
//! is ordinary data (exit 0), while these errors abort a run.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix/vector dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// An input failed validation (nonfinite entry, bad range, malformed config).
    #[error("validation error: {0}")]
    Validation(String),

    /// An input is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A simulated path left the trusted region (|X| > DIVERGENCE_THRESHOLD
    /// or a nonfinite component). Carries the first offending step index.
    #[error("trajectory diverged at step {step}")]
    Diverged { step: usize },

    /// Not enough usable data points for a fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// No certificate can be produced from the given inputs.
    #[error("no certificate: {0}")]
    NoCertificate(String),

    /// The operation is not available for this system class.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The certificate construction produced a quantity that cannot be
    /// represented (for example a nonpositive effective horizon).
    #[error("unrepresentable certificate: {0}")]
    UnrepresentableCertificate(String),

    /// The pre-bisection monotonicity scan found a non-monotone condition.
    /// Carries the scan table (ln parameter, ln condition value).
    #[error("monotonicity scan failed; scan table has {} rows", table.len())]
    MonotonicityScan { table: Vec<(f64, f64)> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI. Validation-class problems are 2 so CI
    /// can distinguish them from runtime failures; a certificate that merely
    /// *fails* never reaches this path.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape(_)
            | Error::Validation(_)
            | Error::Domain(_)
            | Error::Unsupported(_)
            | Error::UnrepresentableCertificate(_)
            | Error::MonotonicityScan { .. } => 2,
            Error::Diverged { .. } => 3,
            Error::InsufficientData(_) => 4,
            Error::NoCertificate(_) => 5,
            Error::Io(_) => 1,
        }
    }
}
