//! Minimal dense-tensor autodiff: f64 arrays, a fixed op set, and reverse-mode
//! gradients over named parameter slots.
//!
//! The op set is deliberately small — exactly what the encoder/discriminator
//! MLPs and the contrastive/adversarial losses need:
//! matmul (plain and `A·Bᵀ`), add with row broadcast, ReLU, exp, log,
//! sum/mean reductions, elementwise multiply/divide, row-wise L2
//! normalization, and dot product. Anything else is out of scope, as is any
//! broadcasting beyond the batch dimension.
//!
//! Gradients come with an independent check: [`fd::finite_diff_grad`]
//! computes central differences over the same flat parameter vector, and the
//! test suite holds every op's backward to it.

mod fd;
mod graph;

pub use fd::{check_all_ops, finite_diff_grad, rel_err, OpCheck};
pub use graph::{Evaluation, Graph, GraphBuilder, NodeId};

use crate::error::{Error, Result};

/// Dense row-major f64 array. Rank 0 (scalar, one element), 1 (vector) and
/// 2 (matrix) are the only ranks the ops accept.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseArray {
    pub fn zeros(shape: &[usize]) -> DenseArray {
        let len = shape.iter().product();
        DenseArray { shape: shape.to_vec(), data: vec![0.0; len] }
    }

    pub fn scalar(v: f64) -> DenseArray {
        DenseArray { shape: vec![], data: vec![v] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<DenseArray> {
        let want: usize = shape.iter().product();
        if data.len() != want {
            return Err(Error::Shape {
                context: format!(
                    "buffer of {} elements cannot fill shape {shape:?} ({want} elements)",
                    data.len()
                ),
            });
        }
        Ok(DenseArray { shape: shape.to_vec(), data })
    }

    pub fn vector(data: Vec<f64>) -> DenseArray {
        DenseArray { shape: vec![data.len()], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    /// Scalar value; panics on non-scalars (programmer error, not input error).
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on non-scalar of shape {:?}", self.shape);
        self.data[0]
    }

    /// Rows of a matrix, or 1 for a vector/scalar.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            _ => 1,
        }
    }

    /// Columns of a matrix, or the length of a vector.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[1],
            1 => self.shape[0],
            _ => 1,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
