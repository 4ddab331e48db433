use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input: malformed data, out-of-domain arguments, invalid parameters.
    Input,
    /// The numbers went wrong: singular systems, divergence, non-convergence.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid distribution parameters: {0}")]
    Parameter(String),

    #[error("outside the chart formula's domain: {0}")]
    TailDomain(String),

    #[error("degenerate covariate: {0}")]
    DegenerateCovariate(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "requested edf {target:.4} is not attainable; the smoother supports [{min:.4}, {max:.4}]"
    )]
    UnattainableDf { target: f64, min: f64, max: f64 },

    #[error("numerical failure: {message} (condition estimate {condition:.3e})")]
    Numerical { message: String, condition: f64 },

    #[error(
        "fit diverged at cycle {cycle} while updating {parameter}: global deviance is not finite; try smaller df values"
    )]
    Divergence { cycle: usize, parameter: &'static str },

    #[error("model selection failed: every grid cell failed ({})", .failures.join("; "))]
    SelectionFailed { failures: Vec<String> },

    #[error("cross-validation failed: every fold failed ({})", .failures.join("; "))]
    CrossValidationFailed { failures: Vec<String> },

    #[error("import error: {0}")]
    Import(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unsupported model format version {found:?} (this build reads {expected:?})")]
    UnsupportedVersion { found: String, expected: String },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Numerical { .. }
            | Error::Divergence { .. }
            | Error::SelectionFailed { .. }
            | Error::CrossValidationFailed { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Input,
        }
    }

    /// Stable machine-readable code for wire formats.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Parameter(_) => "parameter",
            Error::TailDomain(_) => "tail_domain",
            Error::DegenerateCovariate(_) => "degenerate_covariate",
            Error::Dataset(_) => "dataset",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::UnattainableDf { .. } => "unattainable_df",
            Error::Numerical { .. } => "numerical_failure",
            Error::Divergence { .. } => "divergence",
            Error::SelectionFailed { .. } => "selection_failed",
            Error::CrossValidationFailed { .. } => "cv_failed",
            Error::Import(_) => "import",
            Error::Parse { .. } => "parse",
            Error::UnsupportedVersion { .. } => "unsupported_version",
        }
    }
}
