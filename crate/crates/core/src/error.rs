use thiserror::Error;

/// Errors raised by the analytic and Monte Carlo routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A probability or similar bounded quantity is out of range.
    #[error("range error: {0}")]
    Range(String),

    /// A root search could not find a sign change.
    #[error("no bracket: {0}")]
    NoBracket(String),

    /// The parameters describe a problem with no finite optimum.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Quadrature or root finding did not converge.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {value}")))
    }
}

pub(crate) fn ensure_probability(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Range(format!(
            "{name} must lie in [0, 1], got {value}"
        )))
    }
}
