use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("sample is empty")]
    EmptySample,

    #[error("observation {index} has non-positive time {time}")]
    NonPositiveTime { index: usize, time: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("model cannot be sampled: {0}")]
    ModelNotSamplable(String),

    #[error("model is not continuous: {0}")]
    ModelNotContinuous(String),

    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),

    /// The integral did not settle; `evidence` holds the last partial
    /// estimates (or tail increments) that failed to converge.
    #[error("integral diverges: {what} (last estimates {evidence:?})")]
    DivergentIntegral { what: String, evidence: Vec<f64> },

    #[error("survival function vanishes at x = {x}")]
    SingularSurvival { x: f64 },

    #[error("pair mass {pair_mass} is not positive (need at least two uncensored observations)")]
    DegenerateWeightMass { pair_mass: f64 },

    #[error("kernel returned a non-finite value at ({x}, {y})")]
    NonFiniteKernel { x: f64, y: f64 },

    #[error("symmetric eigensolver did not converge")]
    NonConvergedEigensolve,

    #[error("experiment expects a {expected} regime but the kernel is {found}")]
    RegimeMismatch { expected: String, found: String },

    #[error("grid is not sorted")]
    UnsortedGrid,

    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("cannot parse `{input}`: {message}")]
    Spec { input: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Numerical failures map to a different CLI exit code than input
    /// validation failures.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureFailure(_)
                | Error::DivergentIntegral { .. }
                | Error::SingularSurvival { .. }
                | Error::DegenerateWeightMass { .. }
                | Error::NonFiniteKernel { .. }
                | Error::NonConvergedEigensolve
                | Error::RegimeMismatch { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
