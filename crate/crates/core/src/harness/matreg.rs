use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::optim::{NamedTensor, Tensor};
use crate::rng::SplitMix64;

use super::{expect_matrix, Batch, Task};

/// Noiseless matrix regression: recover a hidden `W*` from pairs `(x, W* x)`.
///
/// `loss = ‖(W − W*) X‖² / (2b)` and `grad = (W − W*) X Xᵀ / b` for a batch
/// `X` of `b` standard-normal columns. `W*` is Gaussian scaled so its
/// spectral norm is about 0.5; `W` starts at zero.
#[derive(Debug, Clone)]
pub struct MatReg {
    target: Matrix,
    batch: usize,
    rng: SplitMix64,
}

impl MatReg {
    pub fn new(seed: u64, n: usize, m: usize, batch: usize) -> Result<Self> {
        if n < 2 || m < 2 {
            return Err(Error::invalid(format!("matreg needs n, m >= 2, got {n}x{m}")));
        }
        if batch == 0 {
            return Err(Error::invalid("batch must be >= 1"));
        }
        let mut root = SplitMix64::new(seed);
        let mut target_rng = root.fork(1);
        let rng = root.fork(2);
        let scale = 0.5 / ((n as f64).sqrt() + (m as f64).sqrt());
        let target = Matrix::gaussian(n, m, &mut target_rng).scale(scale);
        Ok(Self { target, batch, rng })
    }

    pub fn target(&self) -> &Matrix {
        &self.target
    }

    pub fn shape(&self) -> (usize, usize) {
        self.target.shape()
    }

    pub fn batch_of(&mut self, size: usize) -> Batch {
        Batch {
            x: Matrix::gaussian(self.target.cols(), size, &mut self.rng),
            labels: Vec::new(),
        }
    }
}

impl Task for MatReg {
    fn name(&self) -> &'static str {
        "matreg"
    }

    fn init_params(&self) -> Vec<NamedTensor> {
        let (n, m) = self.shape();
        vec![NamedTensor::new("w", Matrix::zeros(n, m))]
    }

    fn sample_batch(&mut self) -> Batch {
        self.batch_of(self.batch)
    }

    fn loss_grad(&self, params: &[NamedTensor], batch: &Batch) -> Result<(f64, Vec<Tensor>)> {
        let w = expect_matrix(params, 0, self.shape())?;
        let b = batch.size() as f64;
        let err = w.sub(&self.target)?;
        let r = err.matmul(&batch.x)?;
        let loss = r.as_slice().iter().map(|x| x * x).sum::<f64>() / (2.0 * b);
        let mut grad = r.matmul(&batch.x.transpose())?;
        grad.scale_in_place(1.0 / b);
        Ok((loss, vec![Tensor::Matrix(grad)]))
    }
}
