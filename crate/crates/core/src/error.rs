use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    Domain { field: String, reason: String },

    #[error("infeasible state: {0}")]
    InfeasibleState(String),

    #[error("profile construction failed: {0}")]
    Profile(String),

    #[error("no closed form for this population profile and quadrature is disabled")]
    Capability,

    #[error("quadrature did not converge: estimated error {estimate:.3e} after {subdivisions} subdivisions")]
    Quadrature { estimate: f64, subdivisions: usize },

    #[error("prescription infeasible: {0}")]
    Infeasible(String),

    #[error("field singular on [{start}, {end}]: {reason}")]
    Singularity {
        start: f64,
        end: f64,
        reason: String,
    },

    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(field: &str, reason: &str) -> Self {
        Error::Domain {
            field: field.to_string(),
            reason: reason.to_string(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
