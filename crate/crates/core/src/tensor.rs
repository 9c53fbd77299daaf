//! Shaped `f64` arrays and shared trainable parameters.
//!
//! A [`Tensor`] is a row-major value buffer with an optional same-shape
//! gradient accumulator. Gradients accumulate across backward passes; the
//! caller zeroes them between optimizer steps. [`Param`] wraps a tensor in
//! shared ownership so a graph, the optimizer, and serialization all see the
//! same storage. Graphs are single-threaded, so `Rc<RefCell<..>>` suffices.

use std::cell::{Ref, RefCell, RefMut};
use std::rc::Rc;

use crate::NumericError;

/// Row-major shaped array of `f64` with an optional gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    /// Create a tensor, checking that `values.len()` matches the shape product.
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, NumericError> {
        let numel: usize = shape.iter().product();
        if shape.contains(&0) {
            return Err(NumericError::Contract {
                op: "Tensor::new",
                msg: format!("shape {shape:?} has a zero dimension"),
            });
        }
        if numel != values.len() {
            return Err(NumericError::Contract {
                op: "Tensor::new",
                msg: format!("shape {shape:?} wants {numel} values, got {}", values.len()),
            });
        }
        Ok(Tensor { shape, values, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, values: vec![0.0; numel], grad: None }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![1], values: vec![v], grad: None }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Tensor { shape: vec![values.len()], values, grad: None }
    }

    /// Build a matrix from rows; all rows must share one length.
    pub fn matrix(rows: &[Vec<f64>]) -> Result<Self, NumericError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(NumericError::Contract {
                op: "Tensor::matrix",
                msg: "ragged rows".to_string(),
            });
        }
        Tensor::new(vec![r, c], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    /// Enable the gradient accumulator (zero-initialized).
    pub fn with_grad(mut self) -> Self {
        self.grad = Some(vec![0.0; self.values.len()]);
        self
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Accumulate `delta` into the gradient, allocating it if absent.
    pub fn add_to_grad(&mut self, delta: &[f64]) {
        debug_assert_eq!(delta.len(), self.values.len());
        let g = self.grad.get_or_insert_with(|| vec![0.0; self.values.len()]);
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }

    /// NaN/Inf anywhere in values or grad is a fault state.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
            && self.grad.as_ref().is_none_or(|g| g.iter().all(|v| v.is_finite()))
    }
}

/// Shared handle to a trainable tensor.
///
/// Cloning shares storage: a graph registered on a `Param` writes gradients
/// into the same tensor the optimizer reads.
#[derive(Debug, Clone)]
pub struct Param(Rc<RefCell<Tensor>>);

impl Param {
    pub fn new(tensor: Tensor) -> Self {
        Param(Rc::new(RefCell::new(tensor.with_grad())))
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        Param::new(Tensor::zeros(shape))
    }

    pub fn borrow(&self) -> Ref<'_, Tensor> {
        self.0.borrow()
    }

    pub fn borrow_mut(&self) -> RefMut<'_, Tensor> {
        self.0.borrow_mut()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.borrow().shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.0.borrow().numel()
    }

    /// Pointer identity, used to deduplicate bindings within one graph.
    pub(crate) fn ptr_id(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }
}
