use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value or argument violates its contract.
    #[error("invalid {field}: {reason}")]
    Validation { field: &'static str, reason: String },

    /// A single measurement window produced a Bloch-vector change outside the
    /// short-step regime the update is derived for.
    #[error(
        "step-size violation: |delta s| = {magnitude:.4} in one window \
         (gamma*tau too large or extreme photon-difference outlier)"
    )]
    StepViolation { magnitude: f64 },

    /// The conditioned state collapsed to zero norm. Cannot happen for
    /// gamma*tau < 0.1 with finite measurement outcomes; signals misuse.
    #[error("zero-norm posterior state")]
    ZeroNormPosterior,

    /// The diffusion-direction decomposition is undefined on the poles.
    #[error("diffusion direction undefined at the poles (s_x^2 + s_y^2 = 0)")]
    UndefinedDirection,

    /// The orthogonal/parallel decay decomposition needs a nonzero mean
    /// Bloch vector.
    #[error("decay decomposition undefined for |<s>| = 0")]
    UndefinedDecomposition,

    /// A log-linear fit was asked for on a series that is not positive.
    #[error("fit domain error: {0}")]
    FitDomain(String),

    /// Two ensemble statistics with incompatible time grids cannot merge.
    #[error("cannot merge ensemble statistics: {0}")]
    MergeMismatch(String),
}

impl Error {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }
}
