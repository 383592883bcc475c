use thiserror::Error;

/// Errors raised by the numerical kernels, whitening operators, optimizers and harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, left is {left:?}, right is {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("triangular factor is singular: |T[{row}][{row}]| = {value:e} is below the diagonal floor")]
    SingularTriangular { row: usize, value: f64 },

    #[error("matrix is not numerically SPD: pivot {pivot} = {value:e}")]
    NotSpd { pivot: usize, value: f64 },

    #[error("{method} did not converge within {sweeps} sweeps")]
    IterationLimit { method: &'static str, sweeps: usize },

    #[error("matrix is rank deficient: sigma_min / sigma_max = {ratio:e}")]
    RankDeficient { ratio: f64 },

    #[error("diagonal entry {index} = {value:e} is not positive")]
    NonPositiveDiagonal { index: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
