//! Minimal dense reverse-mode autodiff over 2-D `f64` tensors.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles; calling
//! [`Tape::backward`] on a scalar walks the record once in reverse and returns
//! the gradients of all leaves that require them. Trainable state lives in
//! [`Tensor`]s outside the tape, which accumulate gradients until zeroed.

mod gradcheck;
mod tape;

pub use gradcheck::{gradcheck, GradcheckReport};
pub use tape::{Gradients, Tape, Var};

use crate::error::{JanusError, Result};
use crate::matrix::Matrix;

/// Dense 2-D tensor with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 2],
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(JanusError::mismatch(
                "Tensor::new",
                rows * cols,
                data.len(),
            ));
        }
        Ok(Tensor {
            shape: [rows, cols],
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            shape: [rows, cols],
            data: vec![0.0; rows * cols],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: [1, 1],
            data: vec![v],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        Tensor {
            shape: [m.rows(), m.cols()],
            data: m.data().to_vec(),
            grad: None,
            requires_grad: false,
        }
    }

    /// Marks the tensor as a trainable leaf.
    pub fn requiring_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.shape[0], self.shape[1], self.data.clone())
            .expect("tensor shape invariant")
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `g` into the gradient buffer (allocating it on first use).
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(JanusError::mismatch("accumulate_grad", self.data.len(), g.len()));
        }
        match &mut self.grad {
            Some(buf) => buf.iter_mut().zip(g).for_each(|(b, v)| *b += v),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }
}
