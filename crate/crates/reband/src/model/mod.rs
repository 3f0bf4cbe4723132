//! The reconstruction network: an 8+8 complex U-Net over complex
//! spectrograms with skip convolutions, a conformer bottleneck on the
//! frequency-collapsed sequence, and unified attention blocks between
//! selected encoder stages. The network predicts a complex residual that is
//! added to the degraded input spectrogram.

mod blocks;
mod conformer;
mod cuab;

pub use blocks::{DecoderBlock, EncoderBlock, SkipBlock};
pub use conformer::{Bottleneck, ConformerBlock};
pub use cuab::{Cuab, CuabBranch, MixAxis};

use crate::cplx::Params;
use crate::ctensor::{CArr3, CArr4};
use crate::error::{RebandError, Result};
use crate::scalar::Scalar;
use ndarray::{s, Array3, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const NUM_STAGES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BottleneckKind {
    Conformer,
    Transformer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CuabPlacement {
    /// After the 1st and 7th encoders.
    Standard,
    /// After every encoder.
    Every,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Frequency bins seen by the U-Net (input Nyquist row is dropped).
    pub in_freq: usize,
    /// Time frames per clip; fixes the frequency-branch FC size in the
    /// attention blocks, so inputs must match when those are enabled.
    pub time_frames: usize,
    pub widths: [usize; NUM_STAGES],
    pub enc_kernel: (usize, usize),
    pub skip_kernel: usize,
    pub cuab_kernel: usize,
    pub cuab: CuabPlacement,
    pub bottleneck: BottleneckKind,
    pub depth: usize,
    pub heads: usize,
    pub ff_mult: usize,
    pub conv_kernel: usize,
    pub skips_enabled: bool,
    pub seed: u64,
}

impl ModelConfig {
    /// Full-scale configuration.
    pub fn full_scale() -> Self {
        Self {
            in_freq: 256,
            time_frames: 251,
            widths: [32, 64, 64, 128, 128, 256, 256, 512],
            enc_kernel: (5, 3),
            skip_kernel: 3,
            cuab_kernel: 3,
            cuab: CuabPlacement::Standard,
            bottleneck: BottleneckKind::Conformer,
            depth: 2,
            heads: 8,
            ff_mult: 4,
            conv_kernel: 15,
            skips_enabled: true,
            seed: 0,
        }
    }

    /// Small configuration (~5 M parameters) that still runs the full
    /// pipeline on real-sized spectrograms.
    pub fn desk_scale() -> Self {
        Self {
            widths: [16, 24, 32, 48, 64, 64, 96, 128],
            depth: 1,
            heads: 4,
            ..Self::full_scale()
        }
    }

    /// Tiny configuration for tests.
    pub fn toy() -> Self {
        Self {
            in_freq: 64,
            time_frames: 32,
            widths: [8, 8, 16, 16, 16, 32, 32, 64],
            enc_kernel: (5, 3),
            skip_kernel: 3,
            cuab_kernel: 3,
            cuab: CuabPlacement::Standard,
            bottleneck: BottleneckKind::Conformer,
            depth: 1,
            heads: 2,
            ff_mult: 2,
            conv_kernel: 7,
            skips_enabled: true,
            seed: 0,
        }
    }

    pub fn halvings(&self) -> usize {
        (self.in_freq.trailing_zeros() as usize).min(NUM_STAGES)
    }

    /// Bottleneck sequence dimension: channels x remaining frequency bins.
    pub fn bottleneck_dim(&self) -> usize {
        self.widths[NUM_STAGES - 1] * (self.in_freq >> self.halvings())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.in_freq.is_power_of_two() || self.in_freq < 2 {
            return Err(RebandError::InvalidConfig(format!(
                "model: in_freq {} must be a power of two >= 2 (8 frequency halvings)",
                self.in_freq
            )));
        }
        if self.widths.iter().any(|w| *w == 0) {
            return Err(RebandError::InvalidConfig("model: zero channel width".into()));
        }
        if self.depth == 0 {
            return Err(RebandError::InvalidConfig("model: depth must be >= 1".into()));
        }
        if self.bottleneck_dim() % self.heads != 0 {
            return Err(RebandError::InvalidConfig(format!(
                "model: bottleneck dim {} not divisible by {} heads",
                self.bottleneck_dim(),
                self.heads
            )));
        }
        if self.enc_kernel.0 % 2 == 0
            || self.enc_kernel.1 % 2 == 0
            || self.skip_kernel % 2 == 0
            || self.cuab_kernel % 2 == 0
            || self.conv_kernel % 2 == 0
        {
            return Err(RebandError::InvalidConfig("model: kernels must be odd".into()));
        }
        if self.cuab != CuabPlacement::None && self.time_frames == 0 {
            return Err(RebandError::InvalidConfig(
                "model: time_frames required with attention blocks".into(),
            ));
        }
        Ok(())
    }

    fn cuab_at(&self, stage: usize) -> bool {
        match self.cuab {
            CuabPlacement::None => false,
            CuabPlacement::Every => true,
            CuabPlacement::Standard => stage == 0 || stage == 6,
        }
    }
}

pub struct Model<T: Scalar> {
    pub cfg: ModelConfig,
    encoders: Vec<EncoderBlock<T>>,
    cuabs: Vec<Option<Cuab<T>>>,
    skips: Vec<SkipBlock<T>>,
    pub bottleneck: Bottleneck<T>,
    decoders: Vec<DecoderBlock<T>>,
    train_cache: Option<TrainCache>,
}

struct TrainCache {
    bsz: usize,
    time: usize,
}

fn zeros_like<T: Scalar>(x: &CArr4<T>) -> CArr4<T> {
    CArr4 {
        re: Array4::zeros(x.re.raw_dim()),
        im: Array4::zeros(x.im.raw_dim()),
    }
}

/// (B,C,F,T) -> (B,T,C*F)
fn image_to_seq<T: Scalar>(x: &CArr4<T>) -> CArr3<T> {
    let (b, c, fd, td) = x.re.dim();
    let f = |a: &Array4<T>| -> Array3<T> {
        a.view()
            .permuted_axes([0, 3, 1, 2])
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((b, td, c * fd))
            .unwrap()
    };
    CArr3 { re: f(&x.re), im: f(&x.im) }
}

/// (B,T,C*F) -> (B,C,F,T)
fn seq_to_image<T: Scalar>(x: &CArr3<T>, c: usize, fd: usize) -> CArr4<T> {
    let (b, td, _) = x.re.dim();
    let f = |a: &Array3<T>| -> Array4<T> {
        a.clone()
            .into_shape_with_order((b, td, c, fd))
            .unwrap()
            .permuted_axes([0, 2, 3, 1])
            .as_standard_layout()
            .into_owned()
    };
    CArr4 { re: f(&x.re), im: f(&x.im) }
}

impl<T: Scalar> Model<T> {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut encoders = Vec::with_capacity(NUM_STAGES);
        let mut cuabs = Vec::with_capacity(NUM_STAGES);
        let mut skips = Vec::with_capacity(NUM_STAGES);
        let mut halved = Vec::with_capacity(NUM_STAGES);
        let mut f = cfg.in_freq;
        let mut cin = 1;
        for i in 0..NUM_STAGES {
            let halve = f > 1;
            encoders.push(EncoderBlock::new(cin, cfg.widths[i], cfg.enc_kernel, halve, &mut rng));
            if halve {
                f /= 2;
            }
            halved.push(halve);
            cuabs.push(cfg.cuab_at(i).then(|| {
                Cuab::new(cfg.widths[i], f, cfg.time_frames, cfg.cuab_kernel, &mut rng)
            }));
            skips.push(SkipBlock::new(cfg.widths[i], cfg.skip_kernel, &mut rng));
            cin = cfg.widths[i];
        }
        let dim = cfg.bottleneck_dim();
        let with_conv = cfg.bottleneck == BottleneckKind::Conformer;
        let mut blocks = Vec::with_capacity(cfg.depth);
        for _ in 0..cfg.depth {
            blocks.push(ConformerBlock::new(
                dim,
                cfg.heads,
                cfg.ff_mult,
                cfg.conv_kernel,
                with_conv,
                &mut rng,
            )?);
        }
        let mut decoders = Vec::with_capacity(NUM_STAGES);
        for j in 0..NUM_STAGES {
            let stage = NUM_STAGES - 1 - j;
            let cin = 2 * cfg.widths[stage];
            let cout = if stage == 0 { 1 } else { cfg.widths[stage - 1] };
            decoders.push(DecoderBlock::new(
                cin,
                cout,
                cfg.enc_kernel,
                halved[stage],
                j == NUM_STAGES - 1,
                &mut rng,
            ));
        }
        Ok(Self {
            cfg: cfg.clone(),
            encoders,
            cuabs,
            skips,
            bottleneck: Bottleneck { blocks },
            decoders,
            train_cache: None,
        })
    }

    fn check_input(&self, x: &CArr4<T>) -> Result<()> {
        let (_, c, fd, td) = x.re.dim();
        if c != 1 || fd != self.cfg.in_freq + 1 {
            return Err(RebandError::ShapeMismatch(format!(
                "model: expected (B,1,{},T) input, got {:?}",
                self.cfg.in_freq + 1,
                x.re.dim()
            )));
        }
        if self.cfg.cuab != CuabPlacement::None && td != self.cfg.time_frames {
            return Err(RebandError::ShapeMismatch(format!(
                "model: attention blocks fix T = {}, got {td}",
                self.cfg.time_frames
            )));
        }
        if !x.is_finite() {
            return Err(RebandError::Numeric("model: non-finite input".into()));
        }
        Ok(())
    }

    /// Zero the output stage so the untrained model is exactly the identity
    /// on the low band; training then learns a residual refinement starting
    /// from parity with the raw input.
    pub fn zero_init_output(&mut self) {
        if let Some(d) = self.decoders.last_mut() {
            d.visit_params(&mut |w, _| w.fill(T::zero()));
        }
    }

    /// Map a degraded (B,1,F+1,T) complex spectrogram to a reconstructed one
    /// of identical shape. The Nyquist row is dropped on entry and
    /// re-appended as zeros.
    pub fn forward(&mut self, x: &CArr4<T>, train: bool) -> Result<CArr4<T>> {
        self.check_input(x)?;
        let (bsz, _, _, td) = x.re.dim();
        let low = CArr4 {
            re: x.re.slice(s![.., .., ..self.cfg.in_freq, ..]).to_owned(),
            im: x.im.slice(s![.., .., ..self.cfg.in_freq, ..]).to_owned(),
        };
        let mut h = low.clone();
        let mut skip_outs = Vec::with_capacity(NUM_STAGES);
        for i in 0..NUM_STAGES {
            h = self.encoders[i].forward(&h, train)?;
            if let Some(cuab) = &mut self.cuabs[i] {
                h = cuab.forward(&h, train)?;
            }
            let sk = if self.cfg.skips_enabled {
                self.skips[i].forward(&h, train)?
            } else {
                zeros_like(&h)
            };
            skip_outs.push(sk);
        }
        let c8 = self.cfg.widths[NUM_STAGES - 1];
        let f8 = self.cfg.in_freq >> self.cfg.halvings();
        let seq = image_to_seq(&h);
        let seq = self.bottleneck.forward(&seq, train)?;
        h = seq_to_image(&seq, c8, f8);
        for j in 0..NUM_STAGES {
            let cat = cuab::concat_channels(&h, &skip_outs[NUM_STAGES - 1 - j]);
            h = self.decoders[j].forward(&cat, train)?;
        }
        let out_low = h.add(&low);
        let mut re = Array4::zeros((bsz, 1, self.cfg.in_freq + 1, td));
        let mut im = Array4::zeros((bsz, 1, self.cfg.in_freq + 1, td));
        re.slice_mut(s![.., .., ..self.cfg.in_freq, ..]).assign(&out_low.re);
        im.slice_mut(s![.., .., ..self.cfg.in_freq, ..]).assign(&out_low.im);
        if train {
            self.train_cache = Some(TrainCache { bsz, time: td });
        }
        let out = CArr4 { re, im };
        if !out.is_finite() {
            return Err(RebandError::Numeric("model: non-finite activations".into()));
        }
        Ok(out)
    }

    /// Backpropagate a cotangent of the output spectrogram; accumulates
    /// parameter gradients and returns the input cotangent.
    pub fn backward(&mut self, gout: &CArr4<T>) -> CArr4<T> {
        let cache = self.train_cache.take().expect("model backward without forward");
        let (bsz, td) = (cache.bsz, cache.time);
        let g_low = CArr4 {
            re: gout.re.slice(s![.., .., ..self.cfg.in_freq, ..]).to_owned(),
            im: gout.im.slice(s![.., .., ..self.cfg.in_freq, ..]).to_owned(),
        };
        let g_res = g_low.clone();
        let mut g = g_low;
        let mut gskips: Vec<Option<CArr4<T>>> = (0..NUM_STAGES).map(|_| None).collect();
        for j in (0..NUM_STAGES).rev() {
            let stage = NUM_STAGES - 1 - j;
            let gcat = self.decoders[j].backward(&g);
            let (gprev, gskip) = cuab::split_channels(&gcat, self.cfg.widths[stage]);
            gskips[stage] = Some(gskip);
            g = gprev;
        }
        let c8 = self.cfg.widths[NUM_STAGES - 1];
        let f8 = self.cfg.in_freq >> self.cfg.halvings();
        let gseq = image_to_seq(&g);
        let gseq = self.bottleneck.backward(&gseq);
        g = seq_to_image(&gseq, c8, f8);
        for i in (0..NUM_STAGES).rev() {
            let gskip = gskips[i].take().unwrap();
            if self.cfg.skips_enabled {
                g = g.add(&self.skips[i].backward(&gskip));
            }
            if let Some(cuab) = &mut self.cuabs[i] {
                g = cuab.backward(&g);
            }
            g = self.encoders[i].backward(&g);
        }
        let gin_low = g.add(&g_res);
        let mut re = Array4::zeros((bsz, 1, self.cfg.in_freq + 1, td));
        let mut im = Array4::zeros((bsz, 1, self.cfg.in_freq + 1, td));
        re.slice_mut(s![.., .., ..self.cfg.in_freq, ..]).assign(&gin_low.re);
        im.slice_mut(s![.., .., ..self.cfg.in_freq, ..]).assign(&gin_low.im);
        CArr4 { re, im }
    }
}

impl<T: Scalar> Params<T> for Model<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        for e in &mut self.encoders {
            e.visit_params(f);
        }
        for c in self.cuabs.iter_mut().flatten() {
            c.visit_params(f);
        }
        for s in &mut self.skips {
            s.visit_params(f);
        }
        self.bottleneck.visit_params(f);
        for d in &mut self.decoders {
            d.visit_params(f);
        }
    }
    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [T])) {
        for e in &mut self.encoders {
            e.visit_buffers(f);
        }
        for c in self.cuabs.iter_mut().flatten() {
            c.visit_buffers(f);
        }
        for s in &mut self.skips {
            s.visit_buffers(f);
        }
        self.bottleneck.visit_buffers(f);
        for d in &mut self.decoders {
            d.visit_buffers(f);
        }
    }
}

/// Mirror of the forward reshape pair, exposed for the image/sequence round
/// trip used by bottleneck-level tests.
pub fn flatten_for_bottleneck<T: Scalar>(x: &CArr4<T>) -> CArr3<T> {
    image_to_seq(x)
}

pub fn unflatten_from_bottleneck<T: Scalar>(x: &CArr3<T>, c: usize, f: usize) -> CArr4<T> {
    seq_to_image(x, c, f)
}
