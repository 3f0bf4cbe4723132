//! Complex fully connected layer.

use super::init::uniform_fan_in;
use super::param::CParam;
use crate::ctensor::CArr2;
use crate::error::{RebandError, Result};
use crate::scalar::Scalar;
use ndarray::{Axis, Ix1, Ix2};
use rand_chacha::ChaCha8Rng;

/// Complex linear map on the last dimension; callers reshape to (rows, in).
#[derive(Debug, Clone)]
pub struct CLinear<T: Scalar> {
    pub w: CParam<T, Ix2>, // (out, in)
    pub b: Option<CParam<T, Ix1>>,
    cache: Option<CArr2<T>>,
}

impl<T: Scalar> CLinear<T> {
    pub fn new(inp: usize, out: usize, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        let w = CParam::new(
            uniform_fan_in((out, inp), inp, rng),
            uniform_fan_in((out, inp), inp, rng),
        );
        let b = bias.then(|| {
            CParam::new(
                uniform_fan_in(out, inp, rng),
                uniform_fan_in(out, inp, rng),
            )
        });
        Self { w, b, cache: None }
    }

    pub fn in_features(&self) -> usize {
        self.w.re.data.dim().1
    }

    pub fn out_features(&self) -> usize {
        self.w.re.data.dim().0
    }

    pub fn forward(&mut self, x: &CArr2<T>, train: bool) -> Result<CArr2<T>> {
        if x.re.dim().1 != self.in_features() {
            return Err(RebandError::ShapeMismatch(format!(
                "linear: input dim {} vs expected {}",
                x.re.dim().1,
                self.in_features()
            )));
        }
        let wr = &self.w.re.data;
        let wi = &self.w.im.data;
        let mut out_re = x.re.dot(&wr.t()) - x.im.dot(&wi.t());
        let mut out_im = x.re.dot(&wi.t()) + x.im.dot(&wr.t());
        if let Some(b) = &self.b {
            out_re += &b.re.data.view().insert_axis(Axis(0));
            out_im += &b.im.data.view().insert_axis(Axis(0));
        }
        if train {
            self.cache = Some(x.clone());
        }
        Ok(CArr2 {
            re: out_re,
            im: out_im,
        })
    }

    pub fn backward(&mut self, gout: &CArr2<T>) -> CArr2<T> {
        let x = self.cache.take().expect("linear backward without forward");
        self.w.re.grad += &(gout.re.t().dot(&x.re) + gout.im.t().dot(&x.im));
        self.w.im.grad += &(gout.im.t().dot(&x.re) - gout.re.t().dot(&x.im));
        if let Some(b) = &mut self.b {
            b.re.grad += &gout.re.sum_axis(Axis(0));
            b.im.grad += &gout.im.sum_axis(Axis(0));
        }
        CArr2 {
            re: gout.re.dot(&self.w.re.data) + gout.im.dot(&self.w.im.data),
            im: gout.im.dot(&self.w.re.data) - gout.re.dot(&self.w.im.data),
        }
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.w.visit(f);
        if let Some(b) = &mut self.b {
            b.visit(f);
        }
    }
}
