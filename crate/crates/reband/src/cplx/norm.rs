//! Split complex batch normalization and layer normalization: the real and
//! imaginary parts are normalized independently, each with its own affine.

use super::param::Tensor;
use crate::ctensor::{CArr3, CArr4};
use crate::error::Result;
use crate::scalar::Scalar;
use ndarray::{Array1, Array2, Array3, Array4, Axis, Ix1};

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

/// Batch normalization over (B, H, W) per channel of a (B, C, H, W) tensor.
#[derive(Debug, Clone)]
pub struct RealBatchNorm<T: Scalar> {
    pub gamma: Tensor<T, Ix1>,
    pub beta: Tensor<T, Ix1>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
    cache: Option<(Array4<T>, Array1<T>)>,
}

impl<T: Scalar> RealBatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::new(Array1::ones(channels)),
            beta: Tensor::new(Array1::zeros(channels)),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<T>, train: bool) -> Array4<T> {
        let (b, c, h, w) = x.dim();
        let n = T::of((b * h * w) as f64);
        let eps = T::of(BN_EPS);
        let mut out = Array4::zeros((b, c, h, w));
        if train {
            let mom = T::of(BN_MOMENTUM);
            let mut xhat = Array4::zeros((b, c, h, w));
            let mut ivar = Array1::zeros(c);
            for ci in 0..c {
                let xc = x.index_axis(Axis(1), ci);
                let mean = xc.sum() / n;
                let mut var = T::zero();
                for v in xc.iter() {
                    let d = *v - mean;
                    var += d * d;
                }
                var /= n;
                let iv = T::one() / (var + eps).sqrt();
                ivar[ci] = iv;
                let (g, bt) = (self.gamma.data[ci], self.beta.data[ci]);
                let mut xhc = xhat.index_axis_mut(Axis(1), ci);
                let mut oc = out.index_axis_mut(Axis(1), ci);
                ndarray::Zip::from(&mut xhc)
                    .and(&mut oc)
                    .and(&xc)
                    .for_each(|xh, o, &xv| {
                        *xh = (xv - mean) * iv;
                        *o = g * *xh + bt;
                    });
                self.running_mean[ci] = (T::one() - mom) * self.running_mean[ci] + mom * mean;
                self.running_var[ci] = (T::one() - mom) * self.running_var[ci] + mom * var;
            }
            self.cache = Some((xhat, ivar));
        } else {
            for ci in 0..c {
                let iv = T::one() / (self.running_var[ci] + eps).sqrt();
                let m = self.running_mean[ci];
                let (g, bt) = (self.gamma.data[ci], self.beta.data[ci]);
                let xc = x.index_axis(Axis(1), ci);
                let mut oc = out.index_axis_mut(Axis(1), ci);
                ndarray::Zip::from(&mut oc).and(&xc).for_each(|o, &xv| {
                    *o = g * (xv - m) * iv + bt;
                });
            }
        }
        out
    }

    pub fn backward(&mut self, gout: &Array4<T>) -> Array4<T> {
        let (xhat, ivar) = self
            .cache
            .take()
            .expect("batch norm backward without training forward");
        let (b, c, h, w) = xhat.dim();
        let n = T::of((b * h * w) as f64);
        let mut dx = Array4::zeros((b, c, h, w));
        for ci in 0..c {
            let gc = gout.index_axis(Axis(1), ci);
            let xhc = xhat.index_axis(Axis(1), ci);
            let sum_g = gc.sum();
            let mut sum_gx = T::zero();
            for (gv, xv) in gc.iter().zip(xhc.iter()) {
                sum_gx += *gv * *xv;
            }
            self.gamma.grad[ci] += sum_gx;
            self.beta.grad[ci] += sum_g;
            let k = self.gamma.data[ci] * ivar[ci] / n;
            let mut dxc = dx.index_axis_mut(Axis(1), ci);
            ndarray::Zip::from(&mut dxc)
                .and(&gc)
                .and(&xhc)
                .for_each(|d, &g, &xh| {
                    *d = k * (n * g - sum_g - xh * sum_gx);
                });
        }
        dx
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.gamma.visit(f);
        self.beta.visit(f);
    }

    pub fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T])) {
        f(self.running_mean.as_slice_mut().unwrap());
        f(self.running_var.as_slice_mut().unwrap());
    }
}

/// Complex split batch norm over (B, C, H, W).
#[derive(Debug, Clone)]
pub struct CBatchNorm2d<T: Scalar> {
    pub bn_re: RealBatchNorm<T>,
    pub bn_im: RealBatchNorm<T>,
}

impl<T: Scalar> CBatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            bn_re: RealBatchNorm::new(channels),
            bn_im: RealBatchNorm::new(channels),
        }
    }

    pub fn forward(&mut self, x: &CArr4<T>, train: bool) -> Result<CArr4<T>> {
        Ok(CArr4 {
            re: self.bn_re.forward(&x.re, train),
            im: self.bn_im.forward(&x.im, train),
        })
    }

    pub fn backward(&mut self, gout: &CArr4<T>) -> CArr4<T> {
        CArr4 {
            re: self.bn_re.backward(&gout.re),
            im: self.bn_im.backward(&gout.im),
        }
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.bn_re.visit(f);
        self.bn_im.visit(f);
    }

    pub fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T])) {
        self.bn_re.visit_buffers(f);
        self.bn_im.visit_buffers(f);
    }
}

/// Layer norm over the last axis of a (B, T, D) tensor.
#[derive(Debug, Clone)]
pub struct RealLayerNorm<T: Scalar> {
    pub gamma: Tensor<T, Ix1>,
    pub beta: Tensor<T, Ix1>,
    cache: Option<(Array3<T>, Array2<T>)>,
}

impl<T: Scalar> RealLayerNorm<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Tensor::new(Array1::ones(dim)),
            beta: Tensor::new(Array1::zeros(dim)),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array3<T>, train: bool) -> Array3<T> {
        let (b, t, d) = x.dim();
        let n = T::of(d as f64);
        let eps = T::of(BN_EPS);
        let mut out = Array3::zeros((b, t, d));
        let mut xhat = Array3::zeros((b, t, d));
        let mut ivar = Array2::zeros((b, t));
        for bi in 0..b {
            for ti in 0..t {
                let row = x.slice(ndarray::s![bi, ti, ..]);
                let mean = row.sum() / n;
                let mut var = T::zero();
                for v in row.iter() {
                    let dd = *v - mean;
                    var += dd * dd;
                }
                var /= n;
                let iv = T::one() / (var + eps).sqrt();
                ivar[[bi, ti]] = iv;
                for di in 0..d {
                    let xh = (x[[bi, ti, di]] - mean) * iv;
                    xhat[[bi, ti, di]] = xh;
                    out[[bi, ti, di]] = self.gamma.data[di] * xh + self.beta.data[di];
                }
            }
        }
        if train {
            self.cache = Some((xhat, ivar));
        }
        out
    }

    pub fn backward(&mut self, gout: &Array3<T>) -> Array3<T> {
        let (xhat, ivar) = self
            .cache
            .take()
            .expect("layer norm backward without forward");
        let (b, t, d) = xhat.dim();
        let n = T::of(d as f64);
        let mut dx = Array3::zeros((b, t, d));
        for bi in 0..b {
            for ti in 0..t {
                let mut sum_g = T::zero();
                let mut sum_gx = T::zero();
                for di in 0..d {
                    let dxh = gout[[bi, ti, di]] * self.gamma.data[di];
                    sum_g += dxh;
                    sum_gx += dxh * xhat[[bi, ti, di]];
                    self.gamma.grad[di] += gout[[bi, ti, di]] * xhat[[bi, ti, di]];
                    self.beta.grad[di] += gout[[bi, ti, di]];
                }
                let k = ivar[[bi, ti]] / n;
                for di in 0..d {
                    let dxh = gout[[bi, ti, di]] * self.gamma.data[di];
                    dx[[bi, ti, di]] = k * (n * dxh - sum_g - xhat[[bi, ti, di]] * sum_gx);
                }
            }
        }
        dx
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.gamma.visit(f);
        self.beta.visit(f);
    }
}

/// Complex split layer norm over (B, T, D).
#[derive(Debug, Clone)]
pub struct CLayerNorm<T: Scalar> {
    pub ln_re: RealLayerNorm<T>,
    pub ln_im: RealLayerNorm<T>,
}

impl<T: Scalar> CLayerNorm<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            ln_re: RealLayerNorm::new(dim),
            ln_im: RealLayerNorm::new(dim),
        }
    }

    pub fn forward(&mut self, x: &CArr3<T>, train: bool) -> CArr3<T> {
        CArr3 {
            re: self.ln_re.forward(&x.re, train),
            im: self.ln_im.forward(&x.im, train),
        }
    }

    pub fn backward(&mut self, gout: &CArr3<T>) -> CArr3<T> {
        CArr3 {
            re: self.ln_re.backward(&gout.re),
            im: self.ln_im.backward(&gout.im),
        }
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.ln_re.visit(f);
        self.ln_im.visit(f);
    }
}
