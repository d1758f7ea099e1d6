use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("missing label: {0}")]
    MissingLabel(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("ill-conditioned system (smallest pivot {pivot:e})")]
    Conditioning { pivot: f64 },
    #[error("eigenvector lies in the null space of the scatter matrix (w'Cw = {value:e})")]
    NullDirection { value: f64 },
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("r2 is undefined for a constant target")]
    R2Undefined,
    #[error("negative-transfer score is undefined for constant label {0}")]
    UndefinedScore(String),
    #[error("mapping rejected: constraint residual {residual:e} exceeds {limit:e}")]
    ConstraintViolated { residual: f64, limit: f64 },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Wraps the error with the pipeline stage it came from.
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Strips any stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
