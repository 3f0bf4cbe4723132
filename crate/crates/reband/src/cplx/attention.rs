//! Complex multi-head self-attention.
//!
//! Q, K, V and the output projection are complex linear maps. Attention
//! scores are the real part of the complex inner product Q·conj(K), scaled
//! by 1/sqrt(d_head), with a real softmax over keys; the resulting real
//! weights are applied to the complex values.

use super::linear::CLinear;
use crate::ctensor::{CArr2, CArr3};
use crate::error::{RebandError, Result};
use crate::scalar::Scalar;
use ndarray::{s, Array2, Array4};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct CMhsa<T: Scalar> {
    pub wq: CLinear<T>,
    pub wk: CLinear<T>,
    pub wv: CLinear<T>,
    pub wo: CLinear<T>,
    pub heads: usize,
    cache: Option<MhsaCache<T>>,
}

#[derive(Debug, Clone)]
struct MhsaCache<T> {
    q: (Array4<T>, Array4<T>),
    k: (Array4<T>, Array4<T>),
    v: (Array4<T>, Array4<T>),
    attn: Array4<T>,
}

/// (B, T, D) -> (B, h, T, dh)
fn split_heads<T: Scalar>(x: &ndarray::Array3<T>, h: usize) -> Array4<T> {
    let (b, t, d) = x.dim();
    let dh = d / h;
    let x = x.view().into_shape_with_order((b, t, h, dh)).unwrap();
    x.permuted_axes([0, 2, 1, 3]).as_standard_layout().into_owned()
}

/// (B, h, T, dh) -> (B, T, D)
fn merge_heads<T: Scalar>(x: &Array4<T>) -> ndarray::Array3<T> {
    let (b, h, t, dh) = x.dim();
    let x = x.view().permuted_axes([0, 2, 1, 3]).as_standard_layout().into_owned();
    x.into_shape_with_order((b, t, h * dh)).unwrap()
}

impl<T: Scalar> CMhsa<T> {
    pub fn new(dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if dim % heads != 0 {
            return Err(RebandError::InvalidConfig(format!(
                "attention dim {dim} not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            wq: CLinear::new(dim, dim, true, rng),
            wk: CLinear::new(dim, dim, true, rng),
            wv: CLinear::new(dim, dim, true, rng),
            wo: CLinear::new(dim, dim, true, rng),
            heads,
            cache: None,
        })
    }

    pub fn forward(&mut self, x: &CArr3<T>, train: bool) -> Result<CArr3<T>> {
        let (b, t, d) = x.re.dim();
        let flat = |a: &ndarray::Array3<T>| {
            a.view()
                .into_shape_with_order((b * t, d))
                .unwrap()
                .into_owned()
        };
        let x2 = CArr2 {
            re: flat(&x.re),
            im: flat(&x.im),
        };
        let unflat = |a: Array2<T>| a.into_shape_with_order((b, t, d)).unwrap();
        let qf = self.wq.forward(&x2, train)?;
        let kf = self.wk.forward(&x2, train)?;
        let vf = self.wv.forward(&x2, train)?;
        let h = self.heads;
        let dh = d / h;
        let q = (
            split_heads(&unflat(qf.re), h),
            split_heads(&unflat(qf.im), h),
        );
        let k = (
            split_heads(&unflat(kf.re), h),
            split_heads(&unflat(kf.im), h),
        );
        let v = (
            split_heads(&unflat(vf.re), h),
            split_heads(&unflat(vf.im), h),
        );
        let scale = T::one() / num_traits::Float::sqrt(T::of(dh as f64));

        let mut attn = Array4::<T>::zeros((b, h, t, t));
        let mut o_re = Array4::<T>::zeros((b, h, t, dh));
        let mut o_im = Array4::<T>::zeros((b, h, t, dh));
        for bi in 0..b {
            for hi in 0..h {
                let qr = q.0.slice(s![bi, hi, .., ..]);
                let qi = q.1.slice(s![bi, hi, .., ..]);
                let kr = k.0.slice(s![bi, hi, .., ..]);
                let ki = k.1.slice(s![bi, hi, .., ..]);
                // Re(Q conj(K)^T) = Qr Kr^T + Qi Ki^T
                let mut scores = qr.dot(&kr.t()) + qi.dot(&ki.t());
                scores.mapv_inplace(|v| v * scale);
                // row softmax
                for mut row in scores.rows_mut() {
                    let m = row.iter().cloned().fold(T::neg_infinity(), T::max);
                    row.mapv_inplace(|v| (v - m).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|v| v / sum);
                }
                let vr = v.0.slice(s![bi, hi, .., ..]);
                let vi = v.1.slice(s![bi, hi, .., ..]);
                o_re.slice_mut(s![bi, hi, .., ..]).assign(&scores.dot(&vr));
                o_im.slice_mut(s![bi, hi, .., ..]).assign(&scores.dot(&vi));
                attn.slice_mut(s![bi, hi, .., ..]).assign(&scores);
            }
        }

        let merged = CArr2 {
            re: flat(&merge_heads(&o_re)),
            im: flat(&merge_heads(&o_im)),
        };
        let out = self.wo.forward(&merged, train)?;
        if train {
            self.cache = Some(MhsaCache { q, k, v, attn });
        }
        Ok(CArr3 {
            re: unflat(out.re),
            im: unflat(out.im),
        })
    }

    /// Attention weights from the most recent training-mode forward.
    pub fn last_attention(&self) -> Option<&Array4<T>> {
        self.cache.as_ref().map(|c| &c.attn)
    }

    pub fn backward(&mut self, gout: &CArr3<T>) -> CArr3<T> {
        let cache = self.cache.take().expect("mhsa backward without forward");
        let (b, t, d) = gout.re.dim();
        let h = self.heads;
        let dh = d / h;
        let scale = T::one() / num_traits::Float::sqrt(T::of(dh as f64));
        let flat = |a: &ndarray::Array3<T>| {
            a.view()
                .into_shape_with_order((b * t, d))
                .unwrap()
                .into_owned()
        };
        let unflat = |a: Array2<T>| a.into_shape_with_order((b, t, d)).unwrap();

        let g2 = CArr2 {
            re: flat(&gout.re),
            im: flat(&gout.im),
        };
        let g_merged = self.wo.backward(&g2);
        let go_re = split_heads(&unflat(g_merged.re), h);
        let go_im = split_heads(&unflat(g_merged.im), h);

        let mut dq_re = Array4::<T>::zeros((b, h, t, dh));
        let mut dq_im = Array4::<T>::zeros((b, h, t, dh));
        let mut dk_re = Array4::<T>::zeros((b, h, t, dh));
        let mut dk_im = Array4::<T>::zeros((b, h, t, dh));
        let mut dv_re = Array4::<T>::zeros((b, h, t, dh));
        let mut dv_im = Array4::<T>::zeros((b, h, t, dh));
        for bi in 0..b {
            for hi in 0..h {
                let a = cache.attn.slice(s![bi, hi, .., ..]);
                let gor = go_re.slice(s![bi, hi, .., ..]);
                let goi = go_im.slice(s![bi, hi, .., ..]);
                let vr = cache.v.0.slice(s![bi, hi, .., ..]);
                let vi = cache.v.1.slice(s![bi, hi, .., ..]);
                dv_re.slice_mut(s![bi, hi, .., ..]).assign(&a.t().dot(&gor));
                dv_im.slice_mut(s![bi, hi, .., ..]).assign(&a.t().dot(&goi));
                let da = gor.dot(&vr.t()) + goi.dot(&vi.t());
                // softmax backward per row
                let mut ds = Array2::<T>::zeros((t, t));
                for i in 0..t {
                    let mut dot = T::zero();
                    for j in 0..t {
                        dot += da[[i, j]] * a[[i, j]];
                    }
                    for j in 0..t {
                        ds[[i, j]] = a[[i, j]] * (da[[i, j]] - dot) * scale;
                    }
                }
                let qr = cache.q.0.slice(s![bi, hi, .., ..]);
                let qi = cache.q.1.slice(s![bi, hi, .., ..]);
                let kr = cache.k.0.slice(s![bi, hi, .., ..]);
                let ki = cache.k.1.slice(s![bi, hi, .., ..]);
                dq_re.slice_mut(s![bi, hi, .., ..]).assign(&ds.dot(&kr));
                dq_im.slice_mut(s![bi, hi, .., ..]).assign(&ds.dot(&ki));
                dk_re.slice_mut(s![bi, hi, .., ..]).assign(&ds.t().dot(&qr));
                dk_im.slice_mut(s![bi, hi, .., ..]).assign(&ds.t().dot(&qi));
            }
        }

        let to2 = |re: &Array4<T>, im: &Array4<T>| CArr2 {
            re: flat(&merge_heads(re)),
            im: flat(&merge_heads(im)),
        };
        let gx_q = self.wq.backward(&to2(&dq_re, &dq_im));
        let gx_k = self.wk.backward(&to2(&dk_re, &dk_im));
        let gx_v = self.wv.backward(&to2(&dv_re, &dv_im));
        let gx = CArr2 {
            re: gx_q.re + gx_k.re + gx_v.re,
            im: gx_q.im + gx_k.im + gx_v.im,
        };
        CArr3 {
            re: unflat(gx.re),
            im: unflat(gx.im),
        }
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.wq.visit(f);
        self.wk.visit(f);
        self.wv.visit(f);
        self.wo.visit(f);
    }
}
