//! Encoder, decoder and skip blocks of the complex U-Net.

use crate::cplx::{CBatchNorm2d, CConv2d, CConvT2d, CRelu, Params};
use crate::ctensor::CArr4;
use crate::error::Result;
use crate::scalar::Scalar;
use ndarray::Ix4;
use rand_chacha::ChaCha8Rng;

/// Complex conv (optionally stride 2 along frequency) -> complex BN -> CReLU.
#[derive(Debug, Clone)]
pub struct EncoderBlock<T: Scalar> {
    pub conv: CConv2d<T>,
    pub bn: CBatchNorm2d<T>,
    pub act: CRelu<T, Ix4>,
}

impl<T: Scalar> EncoderBlock<T> {
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        halve_freq: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let stride = if halve_freq { (2, 1) } else { (1, 1) };
        let padding = ((kernel.0 - 1) / 2, (kernel.1 - 1) / 2);
        Self {
            conv: CConv2d::new(cin, cout, kernel, stride, padding, true, rng),
            bn: CBatchNorm2d::new(cout),
            act: CRelu::new(),
        }
    }

    pub fn forward(&mut self, x: &CArr4<T>, train: bool) -> Result<CArr4<T>> {
        let h = self.conv.forward(x, train)?;
        let h = self.bn.forward(&h, train)?;
        Ok(self.act.forward(&h, train))
    }

    pub fn backward(&mut self, g: &CArr4<T>) -> CArr4<T> {
        let g = self.act.backward(g);
        let g = self.bn.backward(&g);
        self.conv.backward(&g)
    }
}

impl<T: Scalar> Params<T> for EncoderBlock<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.conv.visit(f);
        self.bn.visit(f);
    }
    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T])) {
        self.bn.visit_buffers(f);
    }
}

/// Shape-preserving complex conv -> BN -> CReLU on an encoder output.
#[derive(Debug, Clone)]
pub struct SkipBlock<T: Scalar> {
    pub conv: CConv2d<T>,
    pub bn: CBatchNorm2d<T>,
    pub act: CRelu<T, Ix4>,
}

impl<T: Scalar> SkipBlock<T> {
    pub fn new(channels: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        let pad = (kernel - 1) / 2;
        Self {
            conv: CConv2d::new(channels, channels, (kernel, kernel), (1, 1), (pad, pad), true, rng),
            bn: CBatchNorm2d::new(channels),
            act: CRelu::new(),
        }
    }

    pub fn forward(&mut self, x: &CArr4<T>, train: bool) -> Result<CArr4<T>> {
        let h = self.conv.forward(x, train)?;
        let h = self.bn.forward(&h, train)?;
        Ok(self.act.forward(&h, train))
    }

    pub fn backward(&mut self, g: &CArr4<T>) -> CArr4<T> {
        let g = self.act.backward(g);
        let g = self.bn.backward(&g);
        self.conv.backward(&g)
    }
}

impl<T: Scalar> Params<T> for SkipBlock<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.conv.visit(f);
        self.bn.visit(f);
    }
    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T])) {
        self.bn.visit_buffers(f);
    }
}

#[derive(Debug, Clone)]
enum DecoderConv<T: Scalar> {
    /// Transposed conv doubling the frequency axis.
    Up(CConvT2d<T>),
    /// Shape-preserving conv for stages whose encoder did not downsample.
    Same(CConv2d<T>),
}

/// Mirror of an encoder stage. The deepest-to-shallowest chain restores the
/// frequency resolution; the final stage is purely linear (no BN/activation)
/// so the residual it emits is unconstrained.
#[derive(Debug, Clone)]
pub struct DecoderBlock<T: Scalar> {
    conv: DecoderConv<T>,
    bn: Option<CBatchNorm2d<T>>,
    act: Option<CRelu<T, Ix4>>,
}

impl<T: Scalar> DecoderBlock<T> {
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        double_freq: bool,
        linear_out: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let padding = ((kernel.0 - 1) / 2, (kernel.1 - 1) / 2);
        let conv = if double_freq {
            DecoderConv::Up(CConvT2d::new(
                cin,
                cout,
                kernel,
                (2, 1),
                padding,
                (1, 0),
                true,
                rng,
            ))
        } else {
            DecoderConv::Same(CConv2d::new(cin, cout, kernel, (1, 1), padding, true, rng))
        };
        Self {
            conv,
            bn: (!linear_out).then(|| CBatchNorm2d::new(cout)),
            act: (!linear_out).then(CRelu::new),
        }
    }

    pub fn forward(&mut self, x: &CArr4<T>, train: bool) -> Result<CArr4<T>> {
        let mut h = match &mut self.conv {
            DecoderConv::Up(c) => c.forward(x, train)?,
            DecoderConv::Same(c) => c.forward(x, train)?,
        };
        if let Some(bn) = &mut self.bn {
            h = bn.forward(&h, train)?;
        }
        if let Some(act) = &mut self.act {
            h = act.forward(&h, train);
        }
        Ok(h)
    }

    pub fn backward(&mut self, g: &CArr4<T>) -> CArr4<T> {
        let mut g = g.clone();
        if let Some(act) = &mut self.act {
            g = act.backward(&g);
        }
        if let Some(bn) = &mut self.bn {
            g = bn.backward(&g);
        }
        match &mut self.conv {
            DecoderConv::Up(c) => c.backward(&g),
            DecoderConv::Same(c) => c.backward(&g),
        }
    }
}

impl<T: Scalar> Params<T> for DecoderBlock<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        match &mut self.conv {
            DecoderConv::Up(c) => c.visit(f),
            DecoderConv::Same(c) => c.visit(f),
        }
        if let Some(bn) = &mut self.bn {
            bn.visit(f);
        }
    }
    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T])) {
        if let Some(bn) = &mut self.bn {
            bn.visit_buffers(f);
        }
    }
}
