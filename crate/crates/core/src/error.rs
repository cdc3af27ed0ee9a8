use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("construction error: {0}")]
    Construction(String),
    #[error("simulation error: {0}")]
    Simulation(String),
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("case `{case}`: {source}")]
    Case {
        case: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn in_case(self, case: &str) -> Self {
        Error::Case {
            case: case.to_string(),
            source: Box::new(self),
        }
    }

    /// True for errors the CLI reports as usage/configuration problems.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Parameter(_) | Error::Config(_) => true,
            Error::Case { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
