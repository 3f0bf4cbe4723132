//! Unified attention over the time and frequency axes of a complex feature
//! map.
//!
//! Two symmetric branches run in parallel. The time branch restricts every
//! convolution to the frequency axis and mixes bins with a fully connected
//! layer applied independently per (channel, frame) — so permuting frames
//! permutes its output identically. The frequency branch mirrors this along
//! time. Each branch builds a single-channel attention map, multiplies it
//! into the input, applies its FC, and is fused back with the input; the two
//! branch outputs are fused by a 1x1 convolution.

use crate::cplx::{CBatchNorm2d, CConv2d, CLinear, CRelu, Params};
use crate::ctensor::{CArr2, CArr4};
use crate::error::Result;
use crate::scalar::Scalar;
use ndarray::{concatenate, s, Array2, Array4, Axis, Ix4};
use rand_chacha::ChaCha8Rng;

/// Axis the branch's FC layer mixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixAxis {
    Frequency,
    Time,
}

pub(crate) fn concat_channels<T: Scalar>(a: &CArr4<T>, b: &CArr4<T>) -> CArr4<T> {
    CArr4 {
        re: concatenate(Axis(1), &[a.re.view(), b.re.view()]).unwrap(),
        im: concatenate(Axis(1), &[a.im.view(), b.im.view()]).unwrap(),
    }
}

pub(crate) fn split_channels<T: Scalar>(g: &CArr4<T>, c0: usize) -> (CArr4<T>, CArr4<T>) {
    let head = CArr4 {
        re: g.re.slice(s![.., ..c0, .., ..]).to_owned(),
        im: g.im.slice(s![.., ..c0, .., ..]).to_owned(),
    };
    let tail = CArr4 {
        re: g.re.slice(s![.., c0.., .., ..]).to_owned(),
        im: g.im.slice(s![.., c0.., .., ..]).to_owned(),
    };
    (head, tail)
}

/// Flatten (B,C,F,T) to rows over the mixed axis.
fn rows_along<T: Scalar>(x: &Array4<T>, axis: MixAxis) -> Array2<T> {
    let (b, c, fd, td) = x.dim();
    match axis {
        MixAxis::Time => x.clone().into_shape_with_order((b * c * fd, td)).unwrap(),
        MixAxis::Frequency => x
            .view()
            .permuted_axes([0, 1, 3, 2])
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((b * c * td, fd))
            .unwrap(),
    }
}

fn rows_back<T: Scalar>(y: Array2<T>, dims: (usize, usize, usize, usize), axis: MixAxis) -> Array4<T> {
    let (b, c, fd, td) = dims;
    match axis {
        MixAxis::Time => y.into_shape_with_order((b, c, fd, td)).unwrap(),
        MixAxis::Frequency => y
            .into_shape_with_order((b, c, td, fd))
            .unwrap()
            .permuted_axes([0, 1, 3, 2])
            .as_standard_layout()
            .into_owned(),
    }
}

/// Point-wise complex product of a C-channel feature with a 1-channel map.
fn cmul_map<T: Scalar>(e: &CArr4<T>, m: &CArr4<T>) -> CArr4<T> {
    let dims = e.re.raw_dim();
    let mr = m.re.broadcast(dims.clone()).unwrap();
    let mi = m.im.broadcast(dims).unwrap();
    CArr4 {
        re: &e.re * &mr - &e.im * &mi,
        im: &e.re * &mi + &e.im * &mr,
    }
}

fn cmul_map_backward<T: Scalar>(
    e: &CArr4<T>,
    m: &CArr4<T>,
    g: &CArr4<T>,
) -> (CArr4<T>, CArr4<T>) {
    let dims = e.re.raw_dim();
    let mr = m.re.broadcast(dims.clone()).unwrap();
    let mi = m.im.broadcast(dims).unwrap();
    let de = CArr4 {
        re: &g.re * &mr + &g.im * &mi,
        im: &g.im * &mr - &g.re * &mi,
    };
    let dm = CArr4 {
        re: (&g.re * &e.re + &g.im * &e.im)
            .sum_axis(Axis(1))
            .insert_axis(Axis(1)),
        im: (&g.im * &e.re - &g.re * &e.im)
            .sum_axis(Axis(1))
            .insert_axis(Axis(1)),
    };
    (de, dm)
}

#[derive(Debug, Clone)]
pub struct CuabBranch<T: Scalar> {
    pub axis: MixAxis,
    conv1: CConv2d<T>,
    bn1: CBatchNorm2d<T>,
    act1: CRelu<T, Ix4>,
    reduce: CConv2d<T>,
    fc: CLinear<T>,
    fuse: CConv2d<T>,
    bn2: CBatchNorm2d<T>,
    act2: CRelu<T, Ix4>,
    cache: Option<(CArr4<T>, CArr4<T>)>,
}

impl<T: Scalar> CuabBranch<T> {
    pub fn new(
        channels: usize,
        fc_dim: usize,
        axis: MixAxis,
        kernel: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let (k, p) = match axis {
            MixAxis::Frequency => ((kernel, 1), ((kernel - 1) / 2, 0)),
            MixAxis::Time => ((1, kernel), (0, (kernel - 1) / 2)),
        };
        Self {
            axis,
            conv1: CConv2d::new(channels, channels, k, (1, 1), p, true, rng),
            bn1: CBatchNorm2d::new(channels),
            act1: CRelu::new(),
            reduce: CConv2d::new(channels, 1, k, (1, 1), p, true, rng),
            fc: CLinear::new(fc_dim, fc_dim, true, rng),
            fuse: CConv2d::new(2 * channels, channels, k, (1, 1), p, true, rng),
            bn2: CBatchNorm2d::new(channels),
            act2: CRelu::new(),
            cache: None,
        }
    }

    fn fc_apply(&mut self, x: &CArr4<T>, train: bool) -> Result<CArr4<T>> {
        let dims = x.re.dim();
        let rows = CArr2 {
            re: rows_along(&x.re, self.axis),
            im: rows_along(&x.im, self.axis),
        };
        let y = self.fc.forward(&rows, train)?;
        Ok(CArr4 {
            re: rows_back(y.re, dims, self.axis),
            im: rows_back(y.im, dims, self.axis),
        })
    }

    fn fc_backprop(&mut self, g: &CArr4<T>) -> CArr4<T> {
        let dims = g.re.dim();
        let rows = CArr2 {
            re: rows_along(&g.re, self.axis),
            im: rows_along(&g.im, self.axis),
        };
        let gx = self.fc.backward(&rows);
        CArr4 {
            re: rows_back(gx.re, dims, self.axis),
            im: rows_back(gx.im, dims, self.axis),
        }
    }

    pub fn forward(&mut self, e: &CArr4<T>, train: bool) -> Result<CArr4<T>> {
        let a = self.conv1.forward(e, train)?;
        let a = self.bn1.forward(&a, train)?;
        let a = self.act1.forward(&a, train);
        let m = self.reduce.forward(&a, train)?;
        let g = cmul_map(e, &m);
        let h = self.fc_apply(&g, train)?;
        let cat = concat_channels(e, &h);
        let out = self.fuse.forward(&cat, train)?;
        let out = self.bn2.forward(&out, train)?;
        let out = self.act2.forward(&out, train);
        if train {
            self.cache = Some((e.clone(), m));
        }
        Ok(out)
    }

    pub fn backward(&mut self, gout: &CArr4<T>) -> CArr4<T> {
        let (e, m) = self.cache.take().expect("cuab branch backward without forward");
        let c = e.re.dim().1;
        let g = self.act2.backward(gout);
        let g = self.bn2.backward(&g);
        let gcat = self.fuse.backward(&g);
        let (ge_cat, gh) = split_channels(&gcat, c);
        let gg = self.fc_backprop(&gh);
        let (ge_mul, gm) = cmul_map_backward(&e, &m, &gg);
        let ga = self.reduce.backward(&gm);
        let ga = self.act1.backward(&ga);
        let ga = self.bn1.backward(&ga);
        let ge_conv = self.conv1.backward(&ga);
        ge_cat.add(&ge_mul).add(&ge_conv)
    }
}

impl<T: Scalar> Params<T> for CuabBranch<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.conv1.visit(f);
        self.bn1.visit(f);
        self.reduce.visit(f);
        self.fc.visit(f);
        self.fuse.visit(f);
        self.bn2.visit(f);
    }
    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T])) {
        self.bn1.visit_buffers(f);
        self.bn2.visit_buffers(f);
    }
}

#[derive(Debug, Clone)]
pub struct Cuab<T: Scalar> {
    /// Branch equivariant to time-frame permutation (frequency-axis ops,
    /// per-frame FC over bins).
    pub time_branch: CuabBranch<T>,
    /// Branch equivariant to bin permutation (time-axis ops, per-bin FC
    /// over frames).
    pub freq_branch: CuabBranch<T>,
    fuse: CConv2d<T>,
    bn: CBatchNorm2d<T>,
    act: CRelu<T, Ix4>,
    channels: usize,
}

impl<T: Scalar> Cuab<T> {
    pub fn new(
        channels: usize,
        freq: usize,
        time: usize,
        kernel: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            time_branch: CuabBranch::new(channels, freq, MixAxis::Frequency, kernel, rng),
            freq_branch: CuabBranch::new(channels, time, MixAxis::Time, kernel, rng),
            fuse: CConv2d::new(2 * channels, channels, (1, 1), (1, 1), (0, 0), true, rng),
            bn: CBatchNorm2d::new(channels),
            act: CRelu::new(),
            channels,
        }
    }

    pub fn forward(&mut self, e: &CArr4<T>, train: bool) -> Result<CArr4<T>> {
        let pt = self.time_branch.forward(e, train)?;
        let pf = self.freq_branch.forward(e, train)?;
        let cat = concat_channels(&pt, &pf);
        let out = self.fuse.forward(&cat, train)?;
        let out = self.bn.forward(&out, train)?;
        Ok(self.act.forward(&out, train))
    }

    pub fn backward(&mut self, gout: &CArr4<T>) -> CArr4<T> {
        let g = self.act.backward(gout);
        let g = self.bn.backward(&g);
        let gcat = self.fuse.backward(&g);
        let (gt, gf) = split_channels(&gcat, self.channels);
        self.time_branch.backward(&gt).add(&self.freq_branch.backward(&gf))
    }
}

impl<T: Scalar> Params<T> for Cuab<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.time_branch.visit_params(f);
        self.freq_branch.visit_params(f);
        self.fuse.visit(f);
        self.bn.visit(f);
    }
    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T])) {
        self.time_branch.visit_buffers(f);
        self.freq_branch.visit_buffers(f);
        self.bn.visit_buffers(f);
    }
}
