use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::optim::{NamedTensor, Tensor};
use crate::rng::SplitMix64;

use super::{expect_matrix, expect_vector, Batch, Task};

const CENTER_SCALE: f64 = 2.0;

/// Two-layer tanh network with softmax cross-entropy on Gaussian blobs.
///
/// Parameters, in order: `w1` (hidden×input), `b1` (hidden), `w2`
/// (classes×hidden), `b2` (classes). Each class is a unit-variance blob
/// around a Gaussian center.
#[derive(Debug, Clone)]
pub struct Mlp {
    input: usize,
    hidden: usize,
    classes: usize,
    batch: usize,
    centers: Matrix,
    init_seed: u64,
    rng: SplitMix64,
}

impl Mlp {
    pub fn new(seed: u64, input: usize, hidden: usize, classes: usize, batch: usize) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(Error::invalid("mlp input and hidden sizes must be >= 1"));
        }
        if classes < 2 {
            return Err(Error::invalid("mlp needs at least 2 classes"));
        }
        if batch == 0 {
            return Err(Error::invalid("batch must be >= 1"));
        }
        let mut root = SplitMix64::new(seed);
        let centers = Matrix::gaussian(classes, input, &mut root.fork(1)).scale(CENTER_SCALE);
        let init_seed = root.next_u64();
        let rng = root.fork(2);
        Ok(Self {
            input,
            hidden,
            classes,
            batch,
            centers,
            init_seed,
            rng,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn batch_of(&mut self, size: usize) -> Batch {
        let mut x = Matrix::zeros(self.input, size);
        let mut labels = Vec::with_capacity(size);
        for j in 0..size {
            let c = self.rng.below(self.classes);
            for i in 0..self.input {
                x[(i, j)] = self.centers[(c, i)] + self.rng.normal();
            }
            labels.push(c);
        }
        Batch { x, labels }
    }

    fn forward(&self, params: &[NamedTensor], x: &Matrix) -> Result<(Matrix, Matrix)> {
        let w1 = expect_matrix(params, 0, (self.hidden, self.input))?;
        let b1 = expect_vector(params, 1, self.hidden)?;
        let w2 = expect_matrix(params, 2, (self.classes, self.hidden))?;
        let b2 = expect_vector(params, 3, self.classes)?;
        let mut h = w1.matmul(x)?;
        for (i, &bi) in b1.iter().enumerate() {
            h.row_mut(i).iter_mut().for_each(|a| *a = (*a + bi).tanh());
        }
        let mut z = w2.matmul(&h)?;
        for (i, &bi) in b2.iter().enumerate() {
            z.row_mut(i).iter_mut().for_each(|a| *a += bi);
        }
        Ok((h, z))
    }
}

impl Task for Mlp {
    fn name(&self) -> &'static str {
        "mlp"
    }

    fn init_params(&self) -> Vec<NamedTensor> {
        let mut rng = SplitMix64::new(self.init_seed);
        let w1 = Matrix::gaussian(self.hidden, self.input, &mut rng)
            .scale(1.0 / (self.input as f64).sqrt());
        let w2 = Matrix::gaussian(self.classes, self.hidden, &mut rng)
            .scale(1.0 / (self.hidden as f64).sqrt());
        vec![
            NamedTensor::new("w1", w1),
            NamedTensor::new("b1", vec![0.0; self.hidden]),
            NamedTensor::new("w2", w2),
            NamedTensor::new("b2", vec![0.0; self.classes]),
        ]
    }

    fn sample_batch(&mut self) -> Batch {
        self.batch_of(self.batch)
    }

    fn loss_grad(&self, params: &[NamedTensor], batch: &Batch) -> Result<(f64, Vec<Tensor>)> {
        if batch.labels.len() != batch.size() || batch.labels.iter().any(|&c| c >= self.classes) {
            return Err(Error::invalid("batch labels do not match the task"));
        }
        let (h, z) = self.forward(params, &batch.x)?;
        let b = batch.size();
        let inv_b = 1.0 / b as f64;

        // softmax per column; dz = (p - onehot) / b
        let mut dz = z;
        let mut loss = 0.0;
        for (j, &label) in batch.labels.iter().enumerate() {
            let zmax = (0..self.classes).map(|i| dz[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = (0..self.classes).map(|i| (dz[(i, j)] - zmax).exp()).sum();
            let lse = zmax + sum.ln();
            loss += lse - dz[(label, j)];
            for i in 0..self.classes {
                let p = (dz[(i, j)] - lse).exp();
                let y = if i == label { 1.0 } else { 0.0 };
                dz[(i, j)] = (p - y) * inv_b;
            }
        }
        loss *= inv_b;

        let w2 = expect_matrix(params, 2, (self.classes, self.hidden))?;
        let dw2 = dz.matmul(&h.transpose())?;
        let db2: Vec<f64> = (0..self.classes).map(|i| dz.row(i).iter().sum()).collect();
        let mut da = w2.transpose().matmul(&dz)?;
        for (d, hv) in da.as_mut_slice().iter_mut().zip(h.as_slice()) {
            *d *= 1.0 - hv * hv;
        }
        let dw1 = da.matmul(&batch.x.transpose())?;
        let db1: Vec<f64> = (0..self.hidden).map(|i| da.row(i).iter().sum()).collect();
        Ok((
            loss,
            vec![
                Tensor::Matrix(dw1),
                Tensor::Vector(db1),
                Tensor::Matrix(dw2),
                Tensor::Vector(db2),
            ],
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_classes() {
        let mut t = Mlp::new(1, 6, 8, 5, 16).unwrap();
        let mut params = t.init_params();
        params[2].value = Tensor::Matrix(Matrix::zeros(5, 8));
        let batch = t.sample_batch();
        let loss = t.loss(&params, &batch).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn partition_puts_weights_in_matrix_group() {
        let t = Mlp::new(1, 3, 4, 2, 1).unwrap();
        let params = t.init_params();
        let (m, e) =
            crate::optim::partition_params(&params, &[], crate::optim::GroupHyper::default())
                .unwrap();
        assert_eq!(m.indices, vec![0, 2]);
        assert_eq!(e.indices, vec![1, 3]);
    }

    #[test]
    fn labels_cover_all_classes() {
        let mut t = Mlp::new(2, 3, 4, 3, 1).unwrap();
        let batch = t.batch_of(300);
        for c in 0..3 {
            assert!(batch.labels.contains(&c));
        }
    }
}
