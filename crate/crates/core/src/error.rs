use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("Bernoulli degree {degree} exceeds table maximum {max_degree}")]
    DegreeOutOfRange { degree: usize, max_degree: usize },

    #[error("value {value} for {what} lies outside [0, 1]")]
    Domain { what: String, value: f64 },

    #[error("derivative order {order} is not supported for smoothness m = {m} (need order <= m - 1)")]
    UnsupportedDerivativeOrder { order: usize, m: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("response vector is identically zero; the marginal likelihood is degenerate")]
    DegenerateResponse,

    #[error("ingestion error: {0}")]
    Ingestion(String),
}

impl Error {
    /// Stable machine-readable code, one per variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DegreeOutOfRange { .. } => "degree_out_of_range",
            Error::Domain { .. } => "domain",
            Error::UnsupportedDerivativeOrder { .. } => "unsupported_derivative_order",
            Error::Shape(_) => "shape",
            Error::Parameter(_) => "parameter",
            Error::Numerical(_) => "numerical",
            Error::DegenerateResponse => "degenerate_response",
            Error::Ingestion(_) => "ingestion",
        }
    }

    pub(crate) fn domain(what: impl Into<String>, value: f64) -> Self {
        Error::Domain {
            what: what.into(),
            value,
        }
    }
}
