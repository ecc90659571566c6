use thiserror::Error;

use crate::butcher::SchemeFamily;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported tableau {family:?} with s = {s}; supported: {supported}")]
    UnsupportedTableau {
        family: SchemeFamily,
        s: usize,
        supported: &'static str,
    },

    #[error("tableau {family:?} s = {s} failed validation: {detail}")]
    InvalidTableau {
        family: SchemeFamily,
        s: usize,
        detail: String,
    },

    #[error("non-finite value at output index {index} ({context})")]
    NonFinite { context: String, index: usize },

    #[error("singular matrix: zero pivot in column {column} ({context})")]
    Singular { context: String, column: usize },

    #[error("Newton iteration did not converge: residual {residual:e} after {iters} iterations")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("sensitivity mode `{0}` was not allocated when the integrator was built")]
    NotAllocated(&'static str),

    #[error("unknown model `{0}` (expected linear, dae-test or chain-<n_mass>)")]
    UnknownModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("in shooting interval {interval}: {source}")]
    Interval {
        interval: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("in collocation interval {interval}, step {step}, stage {stage}: {source}")]
    Stage {
        interval: usize,
        step: usize,
        stage: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_interval(self, interval: usize) -> Self {
        Error::Interval {
            interval,
            source: Box::new(self),
        }
    }
}
