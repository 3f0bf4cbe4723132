//! Trainable parameters and the visitation contract used by the optimizer,
//! checkpointing, parameter counting and gradient checks.

use crate::scalar::Scalar;
use ndarray::{Array, Dimension};

/// A trainable array plus its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Tensor<T, D: Dimension> {
    pub data: Array<T, D>,
    pub grad: Array<T, D>,
}

impl<T: Scalar, D: Dimension> Tensor<T, D> {
    pub fn new(data: Array<T, D>) -> Self {
        let grad = Array::zeros(data.raw_dim());
        Self { data, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        let d = self.data.as_slice_mut().expect("tensor must be contiguous");
        let g = self.grad.as_slice_mut().expect("tensor must be contiguous");
        f(d, g);
    }
}

/// Complex parameter: paired real/imaginary tensors of identical shape.
#[derive(Debug, Clone)]
pub struct CParam<T, D: Dimension> {
    pub re: Tensor<T, D>,
    pub im: Tensor<T, D>,
}

impl<T: Scalar, D: Dimension> CParam<T, D> {
    pub fn new(re: Array<T, D>, im: Array<T, D>) -> Self {
        assert_eq!(re.shape(), im.shape());
        Self {
            re: Tensor::new(re),
            im: Tensor::new(im),
        }
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.re.visit(f);
        self.im.visit(f);
    }

    pub fn zero_grad(&mut self) {
        self.re.zero_grad();
        self.im.zero_grad();
    }
}

/// Anything holding trainable parameters and persistent (non-trained) buffers.
///
/// Visitation order must be deterministic; the optimizer and the checkpoint
/// format both key state by that order.
pub trait Params<T: Scalar> {
    /// Visit every trainable parameter as (data, grad) flat slices.
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T]));

    /// Visit persistent non-trainable state (e.g. BN running statistics).
    fn visit_buffers(&mut self, _f: &mut dyn FnMut(&mut [T])) {}

    fn zero_grad(&mut self) {
        self.visit_params(&mut |_d, g| g.fill(T::zero()));
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |d, _g| n += d.len());
        n
    }
}
