//! Complex conformer bottleneck operating on the deepest encoder output
//! flattened to a (B, T, D) sequence.
//!
//! Pre-norm layout: half-step feed-forward, multi-head self-attention,
//! depthwise convolution module (absent in the transformer variant), and a
//! second half-step feed-forward, each residual. There is no trailing
//! normalization, so zeroing the residual output projections makes the whole
//! bottleneck an exact identity.

use crate::cplx::{
    CBatchNorm2d, CDepthwiseConv1d, CLayerNorm, CLinear, CMhsa, CRelu, Params,
};
use crate::ctensor::{CArr2, CArr3, CArr4};
use crate::error::Result;
use crate::scalar::Scalar;
use ndarray::{Array2, Array3, Ix2, Ix4};
use rand_chacha::ChaCha8Rng;

fn to_rows<T: Scalar>(x: &CArr3<T>) -> CArr2<T> {
    let (b, t, d) = x.re.dim();
    let f = |a: &Array3<T>| a.clone().into_shape_with_order((b * t, d)).unwrap();
    CArr2 { re: f(&x.re), im: f(&x.im) }
}

fn from_rows<T: Scalar>(x: CArr2<T>, b: usize, t: usize) -> CArr3<T> {
    let d = x.re.dim().1;
    let f = |a: Array2<T>| a.into_shape_with_order((b, t, d)).unwrap();
    CArr3 { re: f(x.re), im: f(x.im) }
}

fn zero_linear<T: Scalar>(l: &mut CLinear<T>) {
    l.w.re.data.fill(T::zero());
    l.w.im.data.fill(T::zero());
    if let Some(b) = &mut l.b {
        b.re.data.fill(T::zero());
        b.im.data.fill(T::zero());
    }
}

/// Pre-norm feed-forward residual branch with a half-step scale.
#[derive(Debug, Clone)]
struct FeedForward<T: Scalar> {
    ln: CLayerNorm<T>,
    lin1: CLinear<T>,
    act: CRelu<T, Ix2>,
    lin2: CLinear<T>,
}

impl<T: Scalar> FeedForward<T> {
    fn new(dim: usize, mult: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            ln: CLayerNorm::new(dim),
            lin1: CLinear::new(dim, dim * mult, true, rng),
            act: CRelu::new(),
            lin2: CLinear::new(dim * mult, dim, true, rng),
        }
    }

    /// Returns the residual delta (already halved).
    fn forward(&mut self, x: &CArr3<T>, train: bool) -> Result<CArr3<T>> {
        let (b, t, _) = x.re.dim();
        let h = self.ln.forward(x, train);
        let h = self.lin1.forward(&to_rows(&h), train)?;
        let h = self.act.forward(&h, train);
        let h = self.lin2.forward(&h, train)?;
        Ok(from_rows(h, b, t).scale(T::of(0.5)))
    }

    fn backward(&mut self, g: &CArr3<T>) -> CArr3<T> {
        let (b, t, _) = g.re.dim();
        let g = g.scale(T::of(0.5));
        let g = self.lin2.backward(&to_rows(&g));
        let g = self.act.backward(&g);
        let g = self.lin1.backward(&g);
        self.ln.backward(&from_rows(g, b, t))
    }
}

impl<T: Scalar> Params<T> for FeedForward<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.ln.visit(f);
        self.lin1.visit(f);
        self.lin2.visit(f);
    }
}

/// Point-wise expansion, depthwise temporal convolution, BN, projection.
#[derive(Debug, Clone)]
struct ConvModule<T: Scalar> {
    ln: CLayerNorm<T>,
    pw1: CLinear<T>,
    act1: CRelu<T, Ix2>,
    dw: CDepthwiseConv1d<T>,
    bn: CBatchNorm2d<T>,
    act2: CRelu<T, Ix4>,
    pw2: CLinear<T>,
}

impl<T: Scalar> ConvModule<T> {
    fn new(dim: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            ln: CLayerNorm::new(dim),
            pw1: CLinear::new(dim, 2 * dim, true, rng),
            act1: CRelu::new(),
            dw: CDepthwiseConv1d::new(2 * dim, kernel, rng),
            bn: CBatchNorm2d::new(2 * dim),
            act2: CRelu::new(),
            pw2: CLinear::new(2 * dim, dim, true, rng),
        }
    }

    fn forward(&mut self, x: &CArr3<T>, train: bool) -> Result<CArr3<T>> {
        let (b, t, _) = x.re.dim();
        let h = self.ln.forward(x, train);
        let h = self.pw1.forward(&to_rows(&h), train)?;
        let h = self.act1.forward(&h, train);
        // (B*T, 2D) -> (B, 2D, T) for the depthwise temporal conv.
        let h3 = from_rows(h, b, t);
        let seq = CArr3 {
            re: h3.re.permuted_axes([0, 2, 1]).as_standard_layout().into_owned(),
            im: h3.im.permuted_axes([0, 2, 1]).as_standard_layout().into_owned(),
        };
        let seq = self.dw.forward(&seq, train)?;
        let c2 = seq.re.dim().1;
        let img = CArr4 {
            re: seq.re.insert_axis(ndarray::Axis(2)),
            im: seq.im.insert_axis(ndarray::Axis(2)),
        };
        let img = self.bn.forward(&img, train)?;
        let img = self.act2.forward(&img, train);
        let seq = CArr3 {
            re: img.re.into_shape_with_order((b, c2, t)).unwrap(),
            im: img.im.into_shape_with_order((b, c2, t)).unwrap(),
        };
        let h3 = CArr3 {
            re: seq.re.permuted_axes([0, 2, 1]).as_standard_layout().into_owned(),
            im: seq.im.permuted_axes([0, 2, 1]).as_standard_layout().into_owned(),
        };
        let out = self.pw2.forward(&to_rows(&h3), train)?;
        Ok(from_rows(out, b, t))
    }

    fn backward(&mut self, g: &CArr3<T>) -> CArr3<T> {
        let (b, t, _) = g.re.dim();
        let g = self.pw2.backward(&to_rows(g));
        let g3 = from_rows(g, b, t);
        let c2 = g3.re.dim().2;
        let seq = CArr3 {
            re: g3.re.permuted_axes([0, 2, 1]).as_standard_layout().into_owned(),
            im: g3.im.permuted_axes([0, 2, 1]).as_standard_layout().into_owned(),
        };
        let img = CArr4 {
            re: seq.re.insert_axis(ndarray::Axis(2)),
            im: seq.im.insert_axis(ndarray::Axis(2)),
        };
        let img = self.act2.backward(&img);
        let img = self.bn.backward(&img);
        let seq = CArr3 {
            re: img.re.into_shape_with_order((b, c2, t)).unwrap(),
            im: img.im.into_shape_with_order((b, c2, t)).unwrap(),
        };
        let seq = self.dw.backward(&seq);
        let h3 = CArr3 {
            re: seq.re.permuted_axes([0, 2, 1]).as_standard_layout().into_owned(),
            im: seq.im.permuted_axes([0, 2, 1]).as_standard_layout().into_owned(),
        };
        let g = self.act1.backward(&to_rows(&h3));
        let g = self.pw1.backward(&g);
        self.ln.backward(&from_rows(g, b, t))
    }
}

impl<T: Scalar> Params<T> for ConvModule<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.ln.visit(f);
        self.pw1.visit(f);
        self.dw.visit(f);
        self.bn.visit(f);
        self.pw2.visit(f);
    }
    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T])) {
        self.bn.visit_buffers(f);
    }
}

#[derive(Debug, Clone)]
pub struct ConformerBlock<T: Scalar> {
    ff1: FeedForward<T>,
    ln_att: CLayerNorm<T>,
    pub mhsa: CMhsa<T>,
    conv: Option<ConvModule<T>>,
    ff2: FeedForward<T>,
}

impl<T: Scalar> ConformerBlock<T> {
    pub fn new(
        dim: usize,
        heads: usize,
        ff_mult: usize,
        conv_kernel: usize,
        with_conv: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            ff1: FeedForward::new(dim, ff_mult, rng),
            ln_att: CLayerNorm::new(dim),
            mhsa: CMhsa::new(dim, heads, rng)?,
            conv: with_conv.then(|| ConvModule::new(dim, conv_kernel, rng)),
            ff2: FeedForward::new(dim, ff_mult, rng),
        })
    }

    pub fn forward(&mut self, x: &CArr3<T>, train: bool) -> Result<CArr3<T>> {
        let x = x.add(&self.ff1.forward(x, train)?);
        let h = self.ln_att.forward(&x, train);
        let x = x.add(&self.mhsa.forward(&h, train)?);
        let x = match &mut self.conv {
            Some(c) => x.add(&c.forward(&x, train)?),
            None => x,
        };
        let d = self.ff2.forward(&x, train)?;
        Ok(x.add(&d))
    }

    pub fn backward(&mut self, gout: &CArr3<T>) -> CArr3<T> {
        let g = gout.add(&self.ff2.backward(gout));
        let g = match &mut self.conv {
            Some(c) => g.add(&c.backward(&g)),
            None => g,
        };
        let g = g.add(&self.ln_att.backward(&self.mhsa.backward(&g)));
        g.add(&self.ff1.backward(&g))
    }

    /// Zero the residual output projections so the block is the identity.
    pub fn zero_init_residuals(&mut self) {
        zero_linear(&mut self.ff1.lin2);
        zero_linear(&mut self.mhsa.wo);
        if let Some(c) = &mut self.conv {
            zero_linear(&mut c.pw2);
        }
        zero_linear(&mut self.ff2.lin2);
    }
}

impl<T: Scalar> Params<T> for ConformerBlock<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.ff1.visit_params(f);
        self.ln_att.visit(f);
        self.mhsa.visit(f);
        if let Some(c) = &mut self.conv {
            c.visit_params(f);
        }
        self.ff2.visit_params(f);
    }
    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T])) {
        if let Some(c) = &mut self.conv {
            c.visit_buffers(f);
        }
    }
}

/// Stack of conformer (or transformer) blocks.
#[derive(Debug, Clone)]
pub struct Bottleneck<T: Scalar> {
    pub blocks: Vec<ConformerBlock<T>>,
}

impl<T: Scalar> Bottleneck<T> {
    pub fn forward(&mut self, x: &CArr3<T>, train: bool) -> Result<CArr3<T>> {
        let mut h = x.clone();
        for b in &mut self.blocks {
            h = b.forward(&h, train)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, g: &CArr3<T>) -> CArr3<T> {
        let mut g = g.clone();
        for b in self.blocks.iter_mut().rev() {
            g = b.backward(&g);
        }
        g
    }

    pub fn zero_init_residuals(&mut self) {
        for b in &mut self.blocks {
            b.zero_init_residuals();
        }
    }
}

impl<T: Scalar> Params<T> for Bottleneck<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        for b in &mut self.blocks {
            b.visit_params(f);
        }
    }
    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T])) {
        for b in &mut self.blocks {
            b.visit_buffers(f);
        }
    }
}
