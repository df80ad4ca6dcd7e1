use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no price for strike 0 (underlying ask); provide a strike-0 row or a spot value")]
    MissingNumeraire,

    #[error("no quotes survived filtering")]
    EmptyCurve,

    #[error("need at least {needed} strikes, found {found}")]
    InsufficientStrikes { needed: usize, found: usize },

    #[error("curve violates convexity/monotonicity: {0}")]
    InconsistentCurve(String),

    #[error("payoff is not admissible: {0}")]
    NotInGamma(String),

    #[error("linear program infeasible: {0}")]
    Infeasible(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("conditional measure has zero mass on the requested window")]
    DegenerateMeasure,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(field: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// Stable machine-readable code, used in the CLI error JSON.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::MissingNumeraire => "missing_numeraire",
            Error::EmptyCurve => "empty_curve",
            Error::InsufficientStrikes { .. } => "insufficient_strikes",
            Error::InconsistentCurve(_) => "inconsistent_curve",
            Error::NotInGamma(_) => "not_in_gamma",
            Error::Infeasible(_) => "infeasible",
            Error::Solver(_) => "solver",
            Error::NoSolution(_) => "no_solution",
            Error::DegenerateMeasure => "degenerate_measure",
            Error::Config(_) => "config",
            Error::Validation { .. } => "validation",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
