//! Run orchestration behind the CLI subcommands: corpus synthesis, dataset
//! preparation, training, reconstruction and evaluation.
//!
//! Every command writes a frozen copy of its fully resolved configuration
//! beside its outputs, so any artifact can be reproduced from that copy plus
//! the seed. The corpus directory itself is never mutated.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::{read_wav_mono, write_wav_mono16};
use crate::degrade::{build_pair, DegradationProfile, CLIP_SAMPLES, TARGET_RATE};
use crate::dsp::resample_sinc;
use crate::error::{RebandError, Result};
use crate::loss::LossConfig;
use crate::metrics::{evaluate_pairs, EvalPair, EvalReport};
use crate::model::ModelConfig;
use crate::stft::StftConfig;
use crate::synth::{hash_noise, pseudo_speech};
use crate::train::{
    load_checkpoint, save_checkpoint, OptimConfig, TrainConfig, TrainPair, Trainer,
};

fn default_stft() -> StftConfig {
    StftConfig {
        n_fft: 512,
        hop: 128,
        win_length: 512,
    }
}

fn default_batch() -> usize {
    1
}
fn default_steps() -> u64 {
    2000
}
fn default_ckpt_every() -> u64 {
    500
}
fn default_test_speaker_fraction() -> f64 {
    0.2
}

fn default_identity_init() -> bool {
    true
}

/// Declarative run configuration; the JSON schema is this struct. Only
/// `corpus_dir`, `workdir` and `seed` are mandatory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Directory of source WAV clips (never modified).
    pub corpus_dir: PathBuf,
    /// Output directory for pairs, manifests, checkpoints and reports.
    pub workdir: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub profile: DegradationProfile,
    #[serde(default = "ModelConfig::desk_scale")]
    pub model: ModelConfig,
    #[serde(default = "default_stft")]
    pub stft: StftConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default = "default_ckpt_every")]
    pub checkpoint_every: u64,
    /// Optional training crop length in samples (multiple of the STFT hop).
    #[serde(default)]
    pub crop_len: Option<usize>,
    /// Start training from an identity mapping on the low band.
    #[serde(default = "default_identity_init")]
    pub identity_init: bool,
    /// Fraction of speakers held out for the test split.
    #[serde(default = "default_test_speaker_fraction")]
    pub test_speaker_fraction: f64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| RebandError::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.model.validate()?;
        self.stft.validate()?;
        if !(0.0..1.0).contains(&self.test_speaker_fraction) {
            return Err(RebandError::InvalidConfig(
                "test_speaker_fraction must be in [0,1)".into(),
            ));
        }
        self.train_config().validate()
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            stft: self.stft,
            loss: self.loss.clone(),
            optim: self.optim,
            batch_size: self.batch_size,
            steps: self.steps,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
            crop_len: self.crop_len,
            identity_init: self.identity_init,
        }
    }

    /// Freeze the resolved config beside the outputs.
    pub fn freeze(&self, name: &str) -> Result<()> {
        std::fs::create_dir_all(&self.workdir)?;
        let path = self.workdir.join(name);
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }
}

/// Speaker id: clip stem up to the first '_', or the whole stem.
fn speaker_of(name: &str) -> String {
    name.split('_').next().unwrap_or(name).to_string()
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestClip {
    pub name: String,
    pub speaker: String,
    pub split: String,
    pub input: PathBuf,
    pub target: PathBuf,
    pub sha256_input: String,
    pub sha256_target: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub profile: DegradationProfile,
    pub seed: u64,
    pub clips: Vec<ManifestClip>,
    /// Corpus files skipped as unreadable, with reasons.
    pub skipped: Vec<(String, String)>,
}

impl Manifest {
    pub fn load(workdir: &Path) -> Result<Self> {
        let path = workdir.join("manifest.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| RebandError::Data(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn split(&self, split: &str) -> Vec<&ManifestClip> {
        self.clips.iter().filter(|c| c.split == split).collect()
    }
}

/// Generate a deterministic synthetic speech-like corpus:
/// `speakers x clips_per_speaker` four-second 8 kHz WAVs named
/// `spkNN_uttMM.wav`.
pub fn cmd_synth_corpus(dir: &Path, speakers: usize, clips_per_speaker: usize) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for s in 0..speakers {
        for u in 0..clips_per_speaker {
            let voice = (s * 1009 + u) as f64;
            let x = pseudo_speech(CLIP_SAMPLES, TARGET_RATE, voice);
            // The formant generator is much brighter than natural speech, which
            // carries the bulk of its energy near the fundamental. Mix in a
            // pitched low-frequency voicing body (per-speaker f0, slow amplitude
            // modulation) so the synthetic corpus has a realistic spectral tilt.
            let f0 = 52.0 + 16.0 * (hash_noise(1, voice + 0.5)[0] + 1.0);
            let am_rate = 2.0 + 1.5 * (hash_noise(1, voice + 1.5)[0] + 1.0) * 0.5;
            let body: Vec<f64> = (0..CLIP_SAMPLES)
                .map(|n| {
                    let t = n as f64 / TARGET_RATE as f64;
                    let am = 0.6 + 0.4 * (2.0 * std::f64::consts::PI * am_rate * t).sin();
                    let mut v = 0.0;
                    for h in 1..=8 {
                        let f = f0 * h as f64;
                        let env = (-(f / 140.0).powi(2)).exp();
                        v += env * (2.0 * std::f64::consts::PI * (f * t + 0.07 * h as f64)).sin();
                    }
                    am * v
                })
                .collect();
            let rms = |v: &[f64]| {
                (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64)
                    .sqrt()
                    .max(1e-9)
            };
            let (rx, rb) = (rms(&x), rms(&body));
            let x: Vec<f64> = x
                .iter()
                .zip(&body)
                .map(|(a, b)| 0.6 * a / rx + 1.0 * b / rb)
                .collect();
            let peak = x.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-9);
            let x: Vec<f64> = x.iter().map(|v| v / peak * 0.5).collect();
            write_wav_mono16(
                &dir.join(format!("spk{s:02}_utt{u:02}.wav")),
                &x,
                TARGET_RATE,
            )?;
        }
    }
    Ok(())
}

/// Prepare the dataset: resample every corpus WAV to 8 kHz, run the capture
/// simulator, write degraded-input/clean-target pairs and a manifest with a
/// speaker-disjoint train/test split.
pub fn cmd_prepare(cfg: &RunConfig) -> Result<Manifest> {
    cfg.freeze("config.prepare.json")?;
    let pairs_dir = cfg.workdir.join("pairs");
    std::fs::create_dir_all(&pairs_dir)?;

    let mut names: Vec<String> = std::fs::read_dir(&cfg.corpus_dir)
        .map_err(|e| RebandError::Data(format!("{}: {e}", cfg.corpus_dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.to_ascii_lowercase().ends_with(".wav"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(RebandError::Data(format!(
            "no .wav files in {}",
            cfg.corpus_dir.display()
        )));
    }

    // Speaker-disjoint split: the last ceil(fraction * n) of the sorted
    // speaker list is the test set.
    let speakers: BTreeSet<String> = names
        .iter()
        .map(|n| speaker_of(n.trim_end_matches(".wav")))
        .collect();
    let speakers: Vec<String> = speakers.into_iter().collect();
    let n_test = ((speakers.len() as f64 * cfg.test_speaker_fraction).ceil() as usize)
        .min(speakers.len().saturating_sub(1));
    let test_speakers: BTreeSet<&String> = speakers[speakers.len() - n_test..].iter().collect();

    let mut profile = cfg.profile.clone();
    profile.seed = cfg.seed;
    let mut clips = Vec::new();
    let mut skipped = Vec::new();
    for (clip_id, name) in names.iter().enumerate() {
        let stem = name.trim_end_matches(".wav");
        let (x, rate) = match read_wav_mono(&cfg.corpus_dir.join(name)) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("skipping {name}: {e}");
                skipped.push((name.clone(), e.to_string()));
                continue;
            }
        };
        let x = if rate == TARGET_RATE {
            x
        } else {
            resample_sinc(&x, rate, TARGET_RATE)
        };
        let (input, target) = build_pair(&x, &profile, clip_id as u64)?;
        let input_path = pairs_dir.join(format!("{stem}.input.wav"));
        let target_path = pairs_dir.join(format!("{stem}.target.wav"));
        write_wav_mono16(&input_path, &input, TARGET_RATE)?;
        write_wav_mono16(&target_path, &target, TARGET_RATE)?;
        let speaker = speaker_of(stem);
        let split = if test_speakers.contains(&speaker) {
            "test"
        } else {
            "train"
        };
        clips.push(ManifestClip {
            name: stem.to_string(),
            speaker,
            split: split.to_string(),
            sha256_input: sha256_file(&input_path)?,
            sha256_target: sha256_file(&target_path)?,
            input: input_path,
            target: target_path,
        });
    }

    let manifest = Manifest {
        profile,
        seed: cfg.seed,
        clips,
        skipped,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(cfg.workdir.join("manifest.json"), json + "\n")?;
    Ok(manifest)
}

fn load_split(manifest: &Manifest, split: &str) -> Result<Vec<(String, TrainPair)>> {
    let clips = manifest.split(split);
    if clips.is_empty() {
        return Err(RebandError::Data(format!("manifest has no {split} clips")));
    }
    clips
        .iter()
        .map(|c| {
            let (i, _) = read_wav_mono(&c.input)?;
            let (t, _) = read_wav_mono(&c.target)?;
            Ok((
                c.name.clone(),
                TrainPair {
                    input: i.iter().map(|v| *v as f32).collect(),
                    target: t.iter().map(|v| *v as f32).collect(),
                },
            ))
        })
        .collect()
}

/// Train (or resume) on the manifest's train split. Logs one JSON line per
/// step to `train_log.jsonl`; checkpoints atomically at the configured
/// cadence; a non-finite loss aborts, keeping the last good checkpoint.
pub fn cmd_train(cfg: &RunConfig, resume: bool) -> Result<PathBuf> {
    cfg.freeze("config.train.json")?;
    let manifest = Manifest::load(&cfg.workdir)?;
    let data: Vec<TrainPair> = load_split(&manifest, "train")?
        .into_iter()
        .map(|(_, p)| p)
        .collect();

    let ckpt_path = cfg.workdir.join("checkpoint.bin");
    let mut trainer = if resume && ckpt_path.exists() {
        Trainer::from_checkpoint(&ckpt_path, cfg.train_config())?
    } else {
        Trainer::new(cfg.model.clone(), cfg.train_config())?
    };

    use std::io::Write;
    let mut log_file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(cfg.workdir.join("train_log.jsonl"))?;

    while trainer.step < cfg.steps {
        let loss = match trainer.train_step(&data) {
            Ok(l) => l,
            Err(e) => {
                log::error!("aborting at step {}: {e}", trainer.step);
                return Err(e);
            }
        };
        let step = trainer.step;
        writeln!(log_file, "{{\"step\":{step},\"loss\":{loss}}}")?;
        if step % 50 == 0 || step == 1 {
            log::info!("step {step}: loss {loss:.5}");
        }
        if step % cfg.checkpoint_every == 0 || step == cfg.steps {
            save_checkpoint(&trainer.checkpoint(), &ckpt_path)?;
        }
    }
    save_checkpoint(&trainer.checkpoint(), &ckpt_path)?;
    Ok(ckpt_path)
}

/// Reconstruct a single WAV through a checkpoint. Any input rate is accepted
/// and resampled to the 8 kHz grid; the output is 8 kHz with the duration
/// preserved.
pub fn cmd_reconstruct(checkpoint: &Path, input: &Path, output: &Path) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let mut trainer = Trainer::from_checkpoint(
        checkpoint,
        TrainConfig {
            stft: ckpt.stft,
            loss: LossConfig::default(),
            optim: ckpt.adam,
            batch_size: 1,
            steps: ckpt.step,
            seed: ckpt.seed,
            checkpoint_every: 1,
            crop_len: None,
            identity_init: true,
        },
    )?;
    let (x, rate) = read_wav_mono(input)?;
    let x = if rate == TARGET_RATE {
        x
    } else {
        resample_sinc(&x, rate, TARGET_RATE)
    };
    let xf: Vec<f32> = x.iter().map(|v| *v as f32).collect();
    let y = trainer.reconstruct(&xf)?;
    let yd: Vec<f64> = y.iter().map(|v| *v as f64).collect();
    write_wav_mono16(output, &yd, TARGET_RATE)
}

/// Evaluation output: the raw-input baseline row is always computed; the
/// model row is omitted (with the reason) if the checkpoint fails.
#[derive(Debug, Serialize, Deserialize)]
pub struct Evaluation {
    pub baseline: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_error: Option<String>,
}

impl Evaluation {
    pub fn text(&self) -> String {
        let mut s = String::new();
        s.push_str("== baseline (raw degraded input) ==\n");
        s.push_str(&self.baseline.text_table());
        match (&self.model, &self.model_error) {
            (Some(m), _) => {
                s.push_str(&format!("== model ({}) ==\n", m.checkpoint));
                s.push_str(&m.text_table());
            }
            (None, Some(e)) => s.push_str(&format!("== model row unavailable: {e} ==\n")),
            _ => {}
        }
        s
    }
}

/// Evaluate the test split: metrics for the raw degraded inputs (baseline
/// row) and for model reconstructions. With `oracle` set, the model row
/// scores the targets against themselves — a plumbing check that must hit
/// every metric ceiling.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    oracle: bool,
    pesq_cmd: Option<&str>,
    nisqa_cmd: Option<&str>,
) -> Result<Evaluation> {
    cfg.freeze("config.evaluate.json")?;
    let manifest = Manifest::load(&cfg.workdir)?;
    let test = load_split(&manifest, "test")?;
    let profile_id = format!(
        "{}Hz_{:?}_snr{:?}",
        manifest.profile.capture_rate, manifest.profile.alias_mode, manifest.profile.snr_db
    );

    let as_f64 = |v: &[f32]| -> Vec<f64> { v.iter().map(|x| *x as f64).collect() };
    let baseline_pairs: Vec<EvalPair> = test
        .iter()
        .map(|(name, p)| EvalPair {
            name: name.clone(),
            reference: as_f64(&p.target),
            estimate: as_f64(&p.input),
        })
        .collect();
    let baseline = evaluate_pairs(
        &baseline_pairs,
        TARGET_RATE,
        &profile_id,
        "baseline",
        pesq_cmd,
        nisqa_cmd,
    )?;

    let model_row = || -> Result<EvalReport> {
        let (pairs, ck_id): (Vec<EvalPair>, String) = if oracle {
            (
                test.iter()
                    .map(|(name, p)| EvalPair {
                        name: name.clone(),
                        reference: as_f64(&p.target),
                        estimate: as_f64(&p.target),
                    })
                    .collect(),
                "oracle".to_string(),
            )
        } else {
            let path = checkpoint
                .map(Path::to_path_buf)
                .unwrap_or_else(|| cfg.workdir.join("checkpoint.bin"));
            let ckpt = load_checkpoint(&path)?;
            let mut trainer = Trainer::from_checkpoint(&path, cfg.train_config())?;
            let mut pairs = Vec::with_capacity(test.len());
            for (name, p) in &test {
                let est = trainer.reconstruct(&p.input)?;
                pairs.push(EvalPair {
                    name: name.clone(),
                    reference: as_f64(&p.target),
                    estimate: as_f64(&est),
                });
            }
            (pairs, format!("step{}", ckpt.step))
        };
        evaluate_pairs(&pairs, TARGET_RATE, &profile_id, &ck_id, pesq_cmd, nisqa_cmd)
    };

    let (model, model_error) = match model_row() {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let eval = Evaluation {
        baseline,
        model,
        model_error,
    };
    let json = serde_json::to_string_pretty(&eval)?;
    std::fs::write(cfg.workdir.join("report.json"), json + "\n")?;
    std::fs::write(cfg.workdir.join("report.txt"), eval.text())?;
    Ok(eval)
}
