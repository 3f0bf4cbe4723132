//! CReLU: component-wise ReLU on real and imaginary parts.
//!
//! Subgradient at zero is fixed to 0.

use crate::ctensor::CArr;
use crate::scalar::Scalar;
use ndarray::Dimension;

#[derive(Debug, Clone, Default)]
pub struct CRelu<T, D: Dimension> {
    cache: Option<CArr<T, D>>,
}

impl<T: Scalar, D: Dimension> CRelu<T, D> {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn forward(&mut self, x: &CArr<T, D>, train: bool) -> CArr<T, D> {
        let out = crelu(x);
        if train {
            self.cache = Some(x.clone());
        }
        out
    }

    pub fn backward(&mut self, gout: &CArr<T, D>) -> CArr<T, D> {
        let x = self.cache.take().expect("crelu backward without forward");
        let mut g = gout.clone();
        g.re.zip_mut_with(&x.re, |gv, xv| {
            if *xv <= T::zero() {
                *gv = T::zero();
            }
        });
        g.im.zip_mut_with(&x.im, |gv, xv| {
            if *xv <= T::zero() {
                *gv = T::zero();
            }
        });
        g
    }
}

/// Stateless forward, used outside of training graphs.
pub fn crelu<T: Scalar, D: Dimension>(x: &CArr<T, D>) -> CArr<T, D> {
    CArr {
        re: x.re.mapv(|v| v.max(T::zero())),
        im: x.im.mapv(|v| v.max(T::zero())),
    }
}
