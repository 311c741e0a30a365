use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// `|M^l(theta)|` fell below the modulus guard `1 - 2 pmax`.
    #[error("degenerate weight at l = {l}: |M^l| = {modulus:.3e} < {bound:.3e}")]
    Degeneracy { l: i64, modulus: f64, bound: f64 },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("inference unavailable: {0}")]
    Inference(String),

    #[error("penalty calibration failed: {0}")]
    Calibration(String),

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
