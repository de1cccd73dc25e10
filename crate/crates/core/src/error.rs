use std::fmt;

/// Stage of a Gibbs iteration, used to locate numeric aborts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Initialize,
    Assignments,
    Components,
    FrequencyMh,
    Concentration,
    LikelihoodParameters,
    LatentMap,
    Standardize,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Initialize => "initialize",
            Stage::Assignments => "assignments",
            Stage::Components => "components",
            Stage::FrequencyMh => "frequency-mh",
            Stage::Concentration => "concentration",
            Stage::LikelihoodParameters => "likelihood-parameters",
            Stage::LatentMap => "latent-map",
            Stage::Standardize => "standardize",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid data at row {row}, column {col}: {msg}")]
    Data { row: usize, col: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("latent matrix is rank deficient (smallest singular value {smallest:e}, largest {largest:e})")]
    DegenerateLatent { smallest: f64, largest: f64 },

    #[error("sampler aborted at iteration {iteration} during {stage}: {source}")]
    Aborted {
        iteration: usize,
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn data(row: usize, col: usize, msg: impl Into<String>) -> Self {
        Error::Data { row, col, msg: msg.into() }
    }

    /// Coarse class used for process exit codes.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Shape(_) | Error::Parameter(_) | Error::Config(_) => ErrorClass::Usage,
            Error::Data { .. } | Error::Io(_) | Error::Json(_) => ErrorClass::Data,
            Error::NotPositiveDefinite(_)
            | Error::Numeric(_)
            | Error::DegenerateLatent { .. }
            | Error::Aborted { .. } => ErrorClass::Numeric,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

pub type Result<T> = std::result::Result<T, Error>;
