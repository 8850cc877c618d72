use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum XRealError {
    #[error("inf - inf is undefined")]
    InfMinusInf,
    #[error("value is NaN")]
    NotANumber,
    #[error("-inf is outside the extended half-line")]
    NegativeInfinity,
    #[error("scale factor {0} is negative")]
    NegativeScale(f64),
}

#[derive(Debug, Error)]
pub enum Error {
    /// The joint law is malformed (bad parameters, nonpositive waiting times, ...).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// An operation parameter is out of range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported moment: {0}")]
    UnsupportedMoment(String),

    /// theta0 = 0 or eta0 = 0: the deviation results do not apply.
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A sub-measure does not line up with the atoms of the law.
    #[error("structural mismatch: {0}")]
    Structural(String),

    /// Runaway simulation (too many renewals or events).
    #[error("model pathology: {0}")]
    Pathology(String),

    #[error("insufficient regeneration cycles: {0}")]
    InsufficientCycles(String),

    #[error("extended-real arithmetic: {0}")]
    XReal(#[from] XRealError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
