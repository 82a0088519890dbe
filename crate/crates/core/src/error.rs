//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The ODF has no positive mass to normalize against.
    #[error("degenerate ODF: {0}")]
    DegenerateOdf(String),

    /// The constitutive Newton solve failed; `residual` is relative to the
    /// norm of the imposed stretching rate.
    #[error("constitutive solve did not converge (relative residual {residual:.3e}, node {node:?})")]
    Convergence { residual: f64, node: Option<usize> },

    #[error("numerical blowup (non-finite ODF value) at substep {substep}")]
    NumericalBlowup { substep: usize },

    /// The surrogate's output stage had no mass left after the ReLU.
    #[error("surrogate output has no mass to normalize")]
    DeadOutput,

    /// Every process mode has a nonpositive predicted objective gain; the
    /// search loop treats this as its break condition.
    #[error("no process mode improves the objective")]
    NotImprovable,

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("mode {mode}: {source}")]
    Mode {
        mode: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Error {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_mode(self, mode: &str) -> Error {
        Error::Mode {
            mode: mode.to_string(),
            source: Box::new(self),
        }
    }
}
