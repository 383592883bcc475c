use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A parameter or gradient: 2-D matrix or flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Tensor {
    Matrix(Matrix),
    Vector(Vec<f64>),
}

impl Tensor {
    pub fn zeros_like(&self) -> Tensor {
        match self {
            Tensor::Matrix(m) => Tensor::Matrix(Matrix::zeros(m.rows(), m.cols())),
            Tensor::Vector(v) => Tensor::Vector(vec![0.0; v.len()]),
        }
    }

    pub fn ndim(&self) -> usize {
        match self {
            Tensor::Matrix(_) => 2,
            Tensor::Vector(_) => 1,
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            Tensor::Matrix(m) => vec![m.rows(), m.cols()],
            Tensor::Vector(v) => vec![v.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            Tensor::Matrix(m) => m.as_slice(),
            Tensor::Vector(v) => v,
        }
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        match self {
            Tensor::Matrix(m) => m.as_mut_slice(),
            Tensor::Vector(v) => v,
        }
    }

    pub fn as_matrix(&self) -> Option<&Matrix> {
        match self {
            Tensor::Matrix(m) => Some(m),
            Tensor::Vector(_) => None,
        }
    }

    pub fn as_matrix_mut(&mut self) -> Option<&mut Matrix> {
        match self {
            Tensor::Matrix(m) => Some(m),
            Tensor::Vector(_) => None,
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.as_slice().iter().map(|x| x * x).sum()
    }

    pub(crate) fn check_same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::invalid(format!(
                "{what}: shape {:?} does not match {:?}",
                other.shape(),
                self.shape()
            )));
        }
        Ok(())
    }
}

impl From<Matrix> for Tensor {
    fn from(m: Matrix) -> Self {
        Tensor::Matrix(m)
    }
}

impl From<Vec<f64>> for Tensor {
    fn from(v: Vec<f64>) -> Self {
        Tensor::Vector(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub value: Tensor,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, value: impl Into<Tensor>) -> Self {
        Self {
            name: name.into(),
            value: value.into(),
        }
    }
}
