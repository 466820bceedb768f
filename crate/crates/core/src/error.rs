use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("{0} did not converge")]
    NoConvergence(&'static str),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("metric undefined: {0}")]
    Metric(&'static str),
    #[error("objective is not finite: {term} term")]
    NonFiniteObjective { term: &'static str },
    #[error("training diverged at epoch {epoch}: non-finite {term} term")]
    Diverged { epoch: usize, term: &'static str },
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, found: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            found,
        }
    }
}
