//! Error taxonomy shared by every module.
//!
//! The split matters for callers: `Config` and `Contract` mean the input was
//! malformed, while the remaining variants mean a numerically checked
//! hypothesis failed or a solver gave up. Batch drivers map the two groups
//! onto different exit codes.

/// Toolkit-wide error type.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// Malformed model or run description (unknown names, missing keys).
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called outside its documented contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A standing condition or theorem hypothesis failed a numeric probe.
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    /// The requested resolution cannot disambiguate the geometry; the message
    /// carries the offending location so the caller can refine and retry.
    #[error("resolution failure: {0}")]
    Resolution(String),

    /// An orbit left the working square I = [-1, 1].
    #[error("boundary escape: {0}")]
    BoundaryEscape(String),

    /// An iterative solver stagnated before reaching its tolerance.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// A solution guaranteed to exist in the validated regime was not found.
    #[error("existence violation: {0}")]
    Existence(String),

    /// No admissible coupling bound exists for the supplied potential.
    #[error("degenerate potential: {0}")]
    Degenerate(String),
}

impl Error {
    /// True for errors caused by malformed input rather than failed numerics.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Contract(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
