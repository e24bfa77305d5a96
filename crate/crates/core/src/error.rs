use thiserror::Error;

/// Errors raised by model construction, evaluation and fitting.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter for {family}: {detail}")]
    InvalidParameter { family: &'static str, detail: String },

    #[error("response {y} is outside the support of {family}")]
    InvalidResponse { family: &'static str, y: f64 },

    #[error("invalid basis configuration: {0}")]
    InvalidBasis(String),

    #[error("degenerate covariate for smooth term `{term}`: {detail}")]
    DegenerateCovariate { term: String, detail: String },

    #[error("design of term `{term}` is rank deficient after centering")]
    RankDeficient { term: String },

    #[error("df target {target} not attainable, attainable range is [{min}, {max}]")]
    DfOutOfRange { target: f64, min: f64, max: f64 },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{column}`: {detail}")]
    InvalidColumn { column: String, detail: String },

    #[error("variable `{0}` is used both as a linear and as a smooth effect in one predictor")]
    OverlappingTerms(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("unsupported specification: {0}")]
    UnsupportedSpec(String),

    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("all {restarts} restarts diverged")]
    AllRestartsDiverged { restarts: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
