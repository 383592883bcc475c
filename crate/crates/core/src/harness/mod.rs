//! Synthetic training tasks with analytic gradients, a finite-difference
//! gradient checker, and the training loop.

mod gradcheck;
mod matreg;
mod mlp;
mod train;

use crate::error::Result;
use crate::linalg::Matrix;
use crate::optim::{NamedTensor, Tensor};

pub use gradcheck::{check_task_gradient, fd_gradient_check, flatten, unflatten, MIN_FD_COORDS};
pub use matreg::MatReg;
pub use mlp::Mlp;
pub use train::{
    build_task, records_to_csv, train, train_with, Timing, TaskKind, TrainConfig, TrainOutcome, TrainRecord,
    TrainStatus, TRAIN_CSV_HEADER,
};

/// One minibatch. Examples are the columns of `x`; `labels` is empty for
/// regression tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Matrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.x.cols()
    }
}

/// A loss with hand-derived gradients and its own data stream.
pub trait Task: Send {
    fn name(&self) -> &'static str;

    /// Deterministic initial parameters.
    fn init_params(&self) -> Vec<NamedTensor>;

    fn sample_batch(&mut self) -> Batch;

    /// Loss and gradient for every parameter, in parameter order.
    fn loss_grad(&self, params: &[NamedTensor], batch: &Batch) -> Result<(f64, Vec<Tensor>)>;

    fn loss(&self, params: &[NamedTensor], batch: &Batch) -> Result<f64> {
        self.loss_grad(params, batch).map(|(l, _)| l)
    }
}

fn expect_matrix(params: &[NamedTensor], i: usize, shape: (usize, usize)) -> Result<&Matrix> {
    match params.get(i).map(|p| &p.value) {
        Some(Tensor::Matrix(m)) if m.shape() == shape => Ok(m),
        _ => Err(crate::Error::invalid(format!(
            "parameter {i} must be a {}x{} matrix",
            shape.0, shape.1
        ))),
    }
}

fn expect_vector(params: &[NamedTensor], i: usize, len: usize) -> Result<&[f64]> {
    match params.get(i).map(|p| &p.value) {
        Some(Tensor::Vector(v)) if v.len() == len => Ok(v),
        _ => Err(crate::Error::invalid(format!(
            "parameter {i} must be a vector of length {len}"
        ))),
    }
}
