//! Training loop: Adam over the complex U-Net, waveform-domain
//! multi-resolution STFT loss, and bit-exact resumable checkpoints.
//!
//! The optimization target is `istft(model(stft(input)))` against the clean
//! target waveform, so all loss resolutions see a single time-domain
//! estimate. Batch selection is a pure function of `(seed, step)`, which
//! makes training traces reproducible and checkpoint resume exact without
//! serializing any RNG state.

use std::path::Path;

use ndarray::s;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cplx::Params;
use crate::ctensor::{CArr2, CArr4};
use crate::error::{RebandError, Result};
use crate::loss::{multires_stft_loss_grad, LossConfig};
use crate::model::{Model, ModelConfig};
use crate::stft::{istft, istft_adjoint, stft, ComplexSpectrogram, StftConfig};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling; gradients are rescaled when the L2
    /// norm over all parameters exceeds it. `None` disables clipping.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        }
    }
}

/// Adam over the model's parameter visitation order. Moment buffers are one
/// flat vector; the stable visitation order of [`Params`] is the keying
/// contract that lets them round-trip through checkpoints.
pub struct Adam {
    pub cfg: OptimConfig,
    m: Vec<f32>,
    v: Vec<f32>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: OptimConfig, model: &mut Model<f32>) -> Self {
        let n = model.param_count();
        Self {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, model: &mut Model<f32>) {
        if let Some(ceiling) = self.cfg.clip_norm {
            let mut sq = 0.0f64;
            model.visit_params(&mut |_p, g| {
                for gi in g.iter() {
                    sq += (*gi as f64) * (*gi as f64);
                }
            });
            let norm = sq.sqrt();
            if norm > ceiling {
                let scale = (ceiling / norm) as f32;
                model.visit_params(&mut |_p, g| {
                    for gi in g.iter_mut() {
                        *gi *= scale;
                    }
                });
            }
        }
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1 as f32, self.cfg.beta2 as f32);
        let lr = self.cfg.lr as f32;
        let eps = self.cfg.eps as f32;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let mut off = 0usize;
        let (m, v) = (&mut self.m, &mut self.v);
        model.visit_params(&mut |p, g| {
            for i in 0..p.len() {
                let gi = g[i];
                m[off + i] = b1 * m[off + i] + (1.0 - b1) * gi;
                v[off + i] = b2 * v[off + i] + (1.0 - b2) * gi * gi;
                let mh = m[off + i] / bc1;
                let vh = v[off + i] / bc2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
            off += p.len();
        });
    }
}

const CKPT_MAGIC: u32 = 0x5242_4e44; // "RBND"
const CKPT_VERSION: u32 = 1;

/// Everything needed to restart training bit-exactly: model + analysis
/// configs, flattened parameters and BN buffers in visitation order, Adam
/// moments, and the step counter.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub magic: u32,
    pub version: u32,
    pub model: ModelConfig,
    pub stft: StftConfig,
    pub seed: u64,
    pub step: u64,
    pub params: Vec<f32>,
    pub buffers: Vec<f32>,
    pub adam: OptimConfig,
    pub adam_m: Vec<f32>,
    pub adam_v: Vec<f32>,
    pub adam_t: u64,
}

fn flatten_params(model: &mut Model<f32>) -> (Vec<f32>, Vec<f32>) {
    let mut params = Vec::new();
    model.visit_params(&mut |p, _| params.extend_from_slice(p));
    let mut buffers = Vec::new();
    model.visit_buffers(&mut |b| buffers.extend_from_slice(b));
    (params, buffers)
}

fn load_flat(model: &mut Model<f32>, params: &[f32], buffers: &[f32]) -> Result<()> {
    let mut off = 0usize;
    let mut ok = true;
    model.visit_params(&mut |p, _| {
        if off + p.len() <= params.len() {
            p.copy_from_slice(&params[off..off + p.len()]);
        } else {
            ok = false;
        }
        off += p.len();
    });
    if !ok || off != params.len() {
        return Err(RebandError::Checkpoint(format!(
            "parameter payload has {} values, model expects {off}",
            params.len()
        )));
    }
    let mut boff = 0usize;
    let mut ok = true;
    model.visit_buffers(&mut |b| {
        if boff + b.len() <= buffers.len() {
            b.copy_from_slice(&buffers[boff..boff + b.len()]);
        } else {
            ok = false;
        }
        boff += b.len();
    });
    if !ok || boff != buffers.len() {
        return Err(RebandError::Checkpoint(format!(
            "buffer payload has {} values, model expects {boff}",
            buffers.len()
        )));
    }
    Ok(())
}

/// Atomic checkpoint write: serialize to a temp file in the same directory,
/// then rename into place.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = bincode::serialize(ckpt)
        .map_err(|e| RebandError::Checkpoint(format!("serialize: {e}")))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|s| s.to_string_lossy()).unwrap_or_default()
    ));
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    let ckpt: Checkpoint = bincode::deserialize(&bytes)
        .map_err(|e| RebandError::Checkpoint(format!("deserialize {}: {e}", path.display())))?;
    if ckpt.magic != CKPT_MAGIC {
        return Err(RebandError::Checkpoint(format!(
            "{}: not a checkpoint file",
            path.display()
        )));
    }
    if ckpt.version != CKPT_VERSION {
        return Err(RebandError::Checkpoint(format!(
            "{}: unsupported checkpoint version {}",
            path.display(),
            ckpt.version
        )));
    }
    Ok(ckpt)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stft: StftConfig,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub batch_size: usize,
    pub steps: u64,
    pub seed: u64,
    pub checkpoint_every: u64,
    /// Train on random fixed-length crops (in samples) instead of whole
    /// clips; crops start on hop boundaries so framing stays aligned.
    pub crop_len: Option<usize>,
    /// Zero the model's output stage so training starts from the identity
    /// on the low band (residual refinement from parity with the raw input).
    #[serde(default = "default_identity_init")]
    pub identity_init: bool,
}

fn default_identity_init() -> bool {
    true
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        if self.batch_size == 0 {
            return Err(RebandError::InvalidConfig("train: batch_size 0".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(RebandError::InvalidConfig(
                "train: checkpoint_every 0".into(),
            ));
        }
        if let Some(c) = self.crop_len {
            if c % self.stft.hop != 0 || c == 0 {
                return Err(RebandError::InvalidConfig(format!(
                    "train: crop_len {c} must be a positive multiple of hop {}",
                    self.stft.hop
                )));
            }
        }
        Ok(())
    }
}

/// One training pair: degraded input and clean target, same length, 8 kHz.
pub struct TrainPair {
    pub input: Vec<f32>,
    pub target: Vec<f32>,
}

pub struct Trainer {
    pub model: Model<f32>,
    pub adam: Adam,
    pub cfg: TrainConfig,
    pub model_cfg: ModelConfig,
    pub step: u64,
}

impl Trainer {
    /// Fresh trainer; the model output stage starts zeroed (identity on the
    /// low band).
    pub fn new(model_cfg: ModelConfig, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.stft.bins() != model_cfg.in_freq + 1 {
            return Err(RebandError::InvalidConfig(format!(
                "train: stft yields {} bins but model expects {}",
                cfg.stft.bins(),
                model_cfg.in_freq + 1
            )));
        }
        let mut model: Model<f32> = Model::new(&model_cfg)?;
        if cfg.identity_init {
            model.zero_init_output();
        }
        let adam = Adam::new(cfg.optim, &mut model);
        Ok(Self {
            model,
            adam,
            cfg,
            model_cfg,
            step: 0,
        })
    }

    pub fn from_checkpoint(path: &Path, mut cfg: TrainConfig) -> Result<Self> {
        let ckpt = load_checkpoint(path)?;
        cfg.stft = ckpt.stft;
        cfg.optim = ckpt.adam;
        cfg.seed = ckpt.seed;
        cfg.validate()?;
        let mut model: Model<f32> = Model::new(&ckpt.model)?;
        load_flat(&mut model, &ckpt.params, &ckpt.buffers)?;
        let mut adam = Adam::new(ckpt.adam, &mut model);
        if adam.m.len() != ckpt.adam_m.len() || adam.v.len() != ckpt.adam_v.len() {
            return Err(RebandError::Checkpoint(
                "optimizer state size mismatch".into(),
            ));
        }
        adam.m = ckpt.adam_m;
        adam.v = ckpt.adam_v;
        adam.t = ckpt.adam_t;
        Ok(Self {
            model,
            adam,
            cfg,
            model_cfg: ckpt.model,
            step: ckpt.step,
        })
    }

    pub fn checkpoint(&mut self) -> Checkpoint {
        let (params, buffers) = flatten_params(&mut self.model);
        Checkpoint {
            magic: CKPT_MAGIC,
            version: CKPT_VERSION,
            model: self.model_cfg.clone(),
            stft: self.cfg.stft,
            seed: self.cfg.seed,
            step: self.step,
            params,
            buffers,
            adam: self.adam.cfg,
            adam_m: self.adam.m.clone(),
            adam_v: self.adam.v.clone(),
            adam_t: self.adam.t,
        }
    }

    /// Deterministic batch plan for the step about to run: clip indices and
    /// crop offsets derived only from (seed, step).
    fn batch_plan(&self, data: &[TrainPair]) -> Vec<(usize, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(self.step.wrapping_add(0x9e37_79b9));
        (0..self.cfg.batch_size)
            .map(|_| {
                let idx = rng.gen_range(0..data.len());
                let start = match self.cfg.crop_len {
                    Some(c) if data[idx].input.len() > c => {
                        let hops = (data[idx].input.len() - c) / self.cfg.stft.hop;
                        rng.gen_range(0..=hops) * self.cfg.stft.hop
                    }
                    _ => 0,
                };
                (idx, start)
            })
            .collect()
    }

    /// One optimization step over a deterministic batch; returns the mean
    /// loss. A non-finite loss aborts with a numeric error before any
    /// parameter update.
    pub fn train_step(&mut self, data: &[TrainPair]) -> Result<f32> {
        if data.is_empty() {
            return Err(RebandError::Data("train: empty dataset".into()));
        }
        let cfg = self.cfg.stft;
        let plan = self.batch_plan(data);
        let bsz = plan.len();

        // Analyze the batch.
        let mut specs = Vec::with_capacity(bsz);
        let mut targets = Vec::with_capacity(bsz);
        let mut crop_len = usize::MAX;
        for &(idx, start) in &plan {
            let pair = &data[idx];
            let end = match self.cfg.crop_len {
                Some(c) => (start + c).min(pair.input.len()),
                None => pair.input.len(),
            };
            crop_len = crop_len.min(end - start);
            specs.push((idx, start));
            targets.push(&pair.target[start..end]);
        }
        // Uniform crop length keeps the batch rectangular.
        let frames = cfg.frames(crop_len);
        let bins = cfg.bins();
        let mut x = CArr4::<f32>::zeros((bsz, 1, bins, frames));
        for (b, &(idx, start)) in specs.iter().enumerate() {
            let spec = stft(&data[idx].input[start..start + crop_len], &cfg, 8000)?;
            x.re.slice_mut(s![b, 0, .., ..]).assign(&spec.data.re);
            x.im.slice_mut(s![b, 0, .., ..]).assign(&spec.data.im);
        }

        let y = self.model.forward(&x, true)?;
        let mut total = 0.0f32;
        let mut gout = CArr4::<f32>::zeros((bsz, 1, bins, frames));
        for b in 0..bsz {
            let spec = ComplexSpectrogram {
                data: CArr2 {
                    re: y.re.slice(s![b, 0, .., ..]).to_owned(),
                    im: y.im.slice(s![b, 0, .., ..]).to_owned(),
                },
                cfg,
                sample_rate: 8000,
            };
            let est = istft(&spec, crop_len)?;
            let (l, gw) = multires_stft_loss_grad(&est, &targets[b][..crop_len], &self.cfg.loss)?;
            total += l;
            let scale = 1.0 / bsz as f32;
            let gw: Vec<f32> = gw.iter().map(|v| v * scale).collect();
            let gspec = istft_adjoint(&gw, &cfg, frames);
            gout.re.slice_mut(s![b, 0, .., ..]).assign(&gspec.re);
            gout.im.slice_mut(s![b, 0, .., ..]).assign(&gspec.im);
        }
        let mean = total / bsz as f32;
        if !mean.is_finite() {
            return Err(RebandError::Numeric(format!(
                "train: non-finite loss at step {}",
                self.step
            )));
        }
        self.model.zero_grad();
        self.model.backward(&gout);
        self.adam.step(&mut self.model);
        self.step += 1;
        Ok(mean)
    }

    /// Eval-mode reconstruction of a single waveform of any length.
    pub fn reconstruct(&mut self, x: &[f32]) -> Result<Vec<f32>> {
        reconstruct_with(&mut self.model, &self.cfg.stft, x)
    }
}

/// Run a waveform through the model in eval mode: stft, forward, istft back
/// to the input length.
pub fn reconstruct_with(model: &mut Model<f32>, cfg: &StftConfig, x: &[f32]) -> Result<Vec<f32>> {
    let spec = stft(x, cfg, 8000)?;
    let (bins, frames) = spec.data.re.dim();
    let mut inp = CArr4::<f32>::zeros((1, 1, bins, frames));
    inp.re.slice_mut(s![0, 0, .., ..]).assign(&spec.data.re);
    inp.im.slice_mut(s![0, 0, .., ..]).assign(&spec.data.im);
    let out = model.forward(&inp, false)?;
    let spec_out = ComplexSpectrogram {
        data: CArr2 {
            re: out.re.slice(s![0, 0, .., ..]).to_owned(),
            im: out.im.slice(s![0, 0, .., ..]).to_owned(),
        },
        cfg: *cfg,
        sample_rate: 8000,
    };
    istft(&spec_out, x.len())
}
