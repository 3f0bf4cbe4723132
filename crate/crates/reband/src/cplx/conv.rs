//! Complex 2-D convolution, transposed convolution and depthwise 1-D
//! convolution with explicit backward passes.
//!
//! The complex combination rule throughout:
//!   out.re = f(x.re, W.re) - f(x.im, W.im)
//!   out.im = f(x.re, W.im) + f(x.im, W.re)
//! where f is the underlying real operator.

use super::im2col::{col2im, im2col, ConvGeometry};
use super::init::uniform_fan_in;
use super::param::CParam;
use crate::ctensor::CArr4;
use crate::error::{RebandError, Result};
use crate::scalar::Scalar;
use ndarray::{Array2, Array4, ArrayView2, Axis, Ix1, Ix2, Ix4};
use rand_chacha::ChaCha8Rng;

/// (B, C, H, W) image -> (B*H*W, C) matrix with channels last.
fn img_to_mat<T: Scalar>(img: &Array4<T>) -> Array2<T> {
    let (b, c, h, w) = img.dim();
    let v = img.view().permuted_axes([0, 2, 3, 1]);
    let owned = v.as_standard_layout().into_owned();
    owned.into_shape_with_order((b * h * w, c)).unwrap()
}

/// (B*H*W, C) matrix -> (B, C, H, W) image.
fn mat_to_img<T: Scalar>(mat: Array2<T>, b: usize, h: usize, w: usize) -> Array4<T> {
    let c = mat.dim().1;
    let img = mat.into_shape_with_order((b, h, w, c)).unwrap();
    let v = img.view().permuted_axes([0, 3, 1, 2]);
    v.as_standard_layout().into_owned()
}

fn weight_mat<T: Scalar>(w: &Array4<T>) -> ArrayView2<'_, T> {
    let (a, b, c, d) = w.dim();
    w.view().into_shape_with_order((a, b * c * d)).unwrap()
}

/// 2-D complex convolution (stride + zero padding).
#[derive(Debug, Clone)]
pub struct CConv2d<T: Scalar> {
    pub w: CParam<T, Ix4>,
    pub b: Option<CParam<T, Ix1>>,
    pub geom: ConvGeometry,
    cache: Option<CArr4<T>>,
}

impl<T: Scalar> CConv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = cin * kernel.0 * kernel.1;
        let shape = (cout, cin, kernel.0, kernel.1);
        let w = CParam::new(
            uniform_fan_in(shape, fan_in, rng),
            uniform_fan_in(shape, fan_in, rng),
        );
        let b = bias.then(|| {
            CParam::new(
                uniform_fan_in(cout, fan_in, rng),
                uniform_fan_in(cout, fan_in, rng),
            )
        });
        let geom = ConvGeometry {
            kh: kernel.0,
            kw: kernel.1,
            sh: stride.0,
            sw: stride.1,
            ph: padding.0,
            pw: padding.1,
        };
        Self {
            w,
            b,
            geom,
            cache: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.w.re.data.dim().0
    }

    pub fn forward(&mut self, x: &CArr4<T>, train: bool) -> Result<CArr4<T>> {
        let (bsz, cin, h, w) = x.re.dim();
        let (cout, wcin, _, _) = self.w.re.data.dim();
        if cin != wcin {
            return Err(RebandError::ShapeMismatch(format!(
                "conv2d: input has {cin} channels, kernel expects {wcin}"
            )));
        }
        if h + 2 * self.geom.ph < self.geom.kh || w + 2 * self.geom.pw < self.geom.kw {
            return Err(RebandError::ShapeMismatch(format!(
                "conv2d: spatial dims ({h},{w}) too small for kernel"
            )));
        }
        let (oh, ow) = self.geom.conv_out(h, w);
        let cols_re = im2col(x.re.view(), &self.geom, oh, ow);
        let cols_im = im2col(x.im.view(), &self.geom, oh, ow);
        let wr = weight_mat(&self.w.re.data);
        let wi = weight_mat(&self.w.im.data);
        let mut out_re = cols_re.dot(&wr.t()) - cols_im.dot(&wi.t());
        let mut out_im = cols_re.dot(&wi.t()) + cols_im.dot(&wr.t());
        if let Some(b) = &self.b {
            out_re += &b.re.data.view().insert_axis(Axis(0));
            out_im += &b.im.data.view().insert_axis(Axis(0));
        }
        let _ = cout;
        if train {
            self.cache = Some(x.clone());
        }
        Ok(CArr4 {
            re: mat_to_img(out_re, bsz, oh, ow),
            im: mat_to_img(out_im, bsz, oh, ow),
        })
    }

    pub fn backward(&mut self, gout: &CArr4<T>) -> CArr4<T> {
        let x = self.cache.take().expect("conv2d backward without forward");
        let (bsz, cin, h, w) = x.re.dim();
        let (_, _, oh, ow) = gout.re.dim();
        let cols_re = im2col(x.re.view(), &self.geom, oh, ow);
        let cols_im = im2col(x.im.view(), &self.geom, oh, ow);
        let g_re = img_to_mat(&gout.re);
        let g_im = img_to_mat(&gout.im);
        let wr = weight_mat(&self.w.re.data).into_owned();
        let wi = weight_mat(&self.w.im.data).into_owned();

        let dwr = g_re.t().dot(&cols_re) + g_im.t().dot(&cols_im);
        let dwi = g_im.t().dot(&cols_re) - g_re.t().dot(&cols_im);
        let wdim = self.w.re.data.raw_dim();
        self.w.re.grad += &dwr.into_shape_with_order(wdim.clone()).unwrap();
        self.w.im.grad += &dwi.into_shape_with_order(wdim).unwrap();
        if let Some(b) = &mut self.b {
            b.re.grad += &g_re.sum_axis(Axis(0));
            b.im.grad += &g_im.sum_axis(Axis(0));
        }

        let dcols_re = g_re.dot(&wr) + g_im.dot(&wi);
        let dcols_im = g_im.dot(&wr) - g_re.dot(&wi);
        CArr4 {
            re: col2im(&dcols_re, &self.geom, bsz, cin, h, w, oh, ow),
            im: col2im(&dcols_im, &self.geom, bsz, cin, h, w, oh, ow),
        }
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.w.visit(f);
        if let Some(b) = &mut self.b {
            b.visit(f);
        }
    }
}

/// 2-D complex transposed convolution. Weight layout (Cin, Cout, KH, KW).
#[derive(Debug, Clone)]
pub struct CConvT2d<T: Scalar> {
    pub w: CParam<T, Ix4>,
    pub b: Option<CParam<T, Ix1>>,
    pub geom: ConvGeometry,
    pub output_padding: (usize, usize),
    cache: Option<CArr4<T>>,
}

impl<T: Scalar> CConvT2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        output_padding: (usize, usize),
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = cin * kernel.0 * kernel.1;
        let shape = (cin, cout, kernel.0, kernel.1);
        let w = CParam::new(
            uniform_fan_in(shape, fan_in, rng),
            uniform_fan_in(shape, fan_in, rng),
        );
        let b = bias.then(|| {
            CParam::new(
                uniform_fan_in(cout, fan_in, rng),
                uniform_fan_in(cout, fan_in, rng),
            )
        });
        let geom = ConvGeometry {
            kh: kernel.0,
            kw: kernel.1,
            sh: stride.0,
            sw: stride.1,
            ph: padding.0,
            pw: padding.1,
        };
        Self {
            w,
            b,
            geom,
            output_padding,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &CArr4<T>, train: bool) -> Result<CArr4<T>> {
        let (bsz, cin, h, w) = x.re.dim();
        let (wcin, cout, _, _) = self.w.re.data.dim();
        if cin != wcin {
            return Err(RebandError::ShapeMismatch(format!(
                "conv_transpose2d: input has {cin} channels, kernel expects {wcin}"
            )));
        }
        let (oh, ow) = self
            .geom
            .conv_transpose_out(h, w, self.output_padding.0, self.output_padding.1);
        let x_re = img_to_mat(&x.re);
        let x_im = img_to_mat(&x.im);
        let k = cout * self.geom.kh * self.geom.kw;
        let wr = self
            .w
            .re
            .data
            .view()
            .into_shape_with_order((cin, k))
            .unwrap();
        let wi = self
            .w
            .im
            .data
            .view()
            .into_shape_with_order((cin, k))
            .unwrap();
        let cols_re = x_re.dot(&wr) - x_im.dot(&wi);
        let cols_im = x_re.dot(&wi) + x_im.dot(&wr);
        let mut out_re = col2im(&cols_re, &self.geom, bsz, cout, oh, ow, h, w);
        let mut out_im = col2im(&cols_im, &self.geom, bsz, cout, oh, ow, h, w);
        if let Some(b) = &self.b {
            for co in 0..cout {
                out_re
                    .index_axis_mut(Axis(1), co)
                    .mapv_inplace(|v| v + b.re.data[co]);
                out_im
                    .index_axis_mut(Axis(1), co)
                    .mapv_inplace(|v| v + b.im.data[co]);
            }
        }
        if train {
            self.cache = Some(x.clone());
        }
        Ok(CArr4 {
            re: out_re,
            im: out_im,
        })
    }

    pub fn backward(&mut self, gout: &CArr4<T>) -> CArr4<T> {
        let x = self
            .cache
            .take()
            .expect("conv_transpose2d backward without forward");
        let (bsz, cin, h, w) = x.re.dim();
        let cout = self.w.re.data.dim().1;
        let k = cout * self.geom.kh * self.geom.kw;
        let gc_re = im2col(gout.re.view(), &self.geom, h, w);
        let gc_im = im2col(gout.im.view(), &self.geom, h, w);
        let x_re = img_to_mat(&x.re);
        let x_im = img_to_mat(&x.im);
        let wr = self
            .w
            .re
            .data
            .view()
            .into_shape_with_order((cin, k))
            .unwrap()
            .into_owned();
        let wi = self
            .w
            .im
            .data
            .view()
            .into_shape_with_order((cin, k))
            .unwrap()
            .into_owned();

        let dwr = x_re.t().dot(&gc_re) + x_im.t().dot(&gc_im);
        let dwi = x_re.t().dot(&gc_im) - x_im.t().dot(&gc_re);
        let wdim = self.w.re.data.raw_dim();
        self.w.re.grad += &dwr.into_shape_with_order(wdim.clone()).unwrap();
        self.w.im.grad += &dwi.into_shape_with_order(wdim).unwrap();
        if let Some(b) = &mut self.b {
            for co in 0..cout {
                b.re.grad[co] += gout.re.index_axis(Axis(1), co).sum();
                b.im.grad[co] += gout.im.index_axis(Axis(1), co).sum();
            }
        }

        let dx_re = gc_re.dot(&wr.t()) + gc_im.dot(&wi.t());
        let dx_im = gc_im.dot(&wr.t()) - gc_re.dot(&wi.t());
        CArr4 {
            re: mat_to_img(dx_re, bsz, h, w),
            im: mat_to_img(dx_im, bsz, h, w),
        }
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.w.visit(f);
        if let Some(b) = &mut self.b {
            b.visit(f);
        }
    }
}

/// Depthwise complex 1-D convolution over (B, C, L), stride 1, same padding.
#[derive(Debug, Clone)]
pub struct CDepthwiseConv1d<T: Scalar> {
    pub w: CParam<T, Ix2>,
    pub kernel: usize,
    cache: Option<(ndarray::Array3<T>, ndarray::Array3<T>)>,
}

impl<T: Scalar> CDepthwiseConv1d<T> {
    pub fn new(channels: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(kernel % 2 == 1, "depthwise kernel must be odd");
        let shape = (channels, kernel);
        Self {
            w: CParam::new(
                uniform_fan_in(shape, kernel, rng),
                uniform_fan_in(shape, kernel, rng),
            ),
            kernel,
            cache: None,
        }
    }

    pub fn forward(
        &mut self,
        x: &crate::ctensor::CArr3<T>,
        train: bool,
    ) -> Result<crate::ctensor::CArr3<T>> {
        let (b, c, l) = x.re.dim();
        if c != self.w.re.data.dim().0 {
            return Err(RebandError::ShapeMismatch(format!(
                "depthwise conv1d: {c} channels vs {}",
                self.w.re.data.dim().0
            )));
        }
        let p = self.kernel / 2;
        let mut out = crate::ctensor::CArr3::zeros((b, c, l));
        for bi in 0..b {
            for ci in 0..c {
                for li in 0..l {
                    let mut acc_r = T::zero();
                    let mut acc_i = T::zero();
                    for t in 0..self.kernel {
                        let s = li as isize + t as isize - p as isize;
                        if s < 0 || s as usize >= l {
                            continue;
                        }
                        let s = s as usize;
                        let (xr, xi) = (x.re[[bi, ci, s]], x.im[[bi, ci, s]]);
                        let (wr, wi) = (self.w.re.data[[ci, t]], self.w.im.data[[ci, t]]);
                        acc_r += xr * wr - xi * wi;
                        acc_i += xr * wi + xi * wr;
                    }
                    out.re[[bi, ci, li]] = acc_r;
                    out.im[[bi, ci, li]] = acc_i;
                }
            }
        }
        if train {
            self.cache = Some((x.re.clone(), x.im.clone()));
        }
        Ok(out)
    }

    pub fn backward(&mut self, gout: &crate::ctensor::CArr3<T>) -> crate::ctensor::CArr3<T> {
        let (xr, xi) = self
            .cache
            .take()
            .expect("depthwise conv1d backward without forward");
        let (b, c, l) = xr.dim();
        let p = self.kernel / 2;
        let mut dx = crate::ctensor::CArr3::zeros((b, c, l));
        for bi in 0..b {
            for ci in 0..c {
                for li in 0..l {
                    let (gr, gi) = (gout.re[[bi, ci, li]], gout.im[[bi, ci, li]]);
                    for t in 0..self.kernel {
                        let s = li as isize + t as isize - p as isize;
                        if s < 0 || s as usize >= l {
                            continue;
                        }
                        let s = s as usize;
                        let (wr, wi) = (self.w.re.data[[ci, t]], self.w.im.data[[ci, t]]);
                        // out.re = xr*wr - xi*wi ; out.im = xr*wi + xi*wr
                        dx.re[[bi, ci, s]] += gr * wr + gi * wi;
                        dx.im[[bi, ci, s]] += gi * wr - gr * wi;
                        self.w.re.grad[[ci, t]] += gr * xr[[bi, ci, s]] + gi * xi[[bi, ci, s]];
                        self.w.im.grad[[ci, t]] += gi * xr[[bi, ci, s]] - gr * xi[[bi, ci, s]];
                    }
                }
            }
        }
        dx
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.w.visit(f);
    }
}
