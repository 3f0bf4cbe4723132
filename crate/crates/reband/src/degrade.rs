//! Capture-channel simulator: turns clean 8 kHz speech into the aliased,
//! transient-noise-corrupted low-rate signals a duct-mounted pressure sensor
//! would produce, then returns them to the 8 kHz grid so the network sees a
//! fixed spectrogram geometry.

use crate::dsp::{filter_same, lowpass_fir, resample_sinc};
use crate::error::{RebandError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const TARGET_RATE: u32 = 8000;
pub const CLIP_SECONDS: usize = 4;
pub const CLIP_SAMPLES: usize = TARGET_RATE as usize * CLIP_SECONDS;

/// Silence trimming threshold: -40 dBFS RMS over 20 ms windows.
const SILENCE_RMS: f64 = 0.01;
const SILENCE_WIN: usize = 160;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AliasMode {
    /// Direct decimation, no pre-filter: out-of-band energy folds in.
    Aliased,
    /// Low-pass at 0.45 x capture rate, then decimate.
    AntiAliased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationProfile {
    /// Sensor sampling rate in Hz; must divide the 8 kHz target rate.
    pub capture_rate: u32,
    pub alias_mode: AliasMode,
    /// Transient-noise SNR in dB; `None` disables noise injection.
    pub snr_db: Option<f64>,
    /// Transient events per second.
    pub event_rate: f64,
    pub seed: u64,
}

impl Default for DegradationProfile {
    fn default() -> Self {
        Self {
            capture_rate: 500,
            alias_mode: AliasMode::Aliased,
            snr_db: Some(7.0),
            event_rate: 2.0,
            seed: 0,
        }
    }
}

impl DegradationProfile {
    pub fn validate(&self) -> Result<()> {
        if self.capture_rate == 0 || self.capture_rate >= TARGET_RATE {
            return Err(RebandError::InvalidConfig(format!(
                "profile: capture rate {} must be below {TARGET_RATE}",
                self.capture_rate
            )));
        }
        if TARGET_RATE % self.capture_rate != 0 {
            return Err(RebandError::InvalidConfig(format!(
                "profile: capture rate {} does not divide {TARGET_RATE} (non-integer decimation)",
                self.capture_rate
            )));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(RebandError::InvalidConfig("profile: SNR must be finite".into()));
            }
        }
        if !(self.event_rate >= 0.0) {
            return Err(RebandError::InvalidConfig("profile: negative event rate".into()));
        }
        Ok(())
    }

    pub fn decimation(&self) -> usize {
        (TARGET_RATE / self.capture_rate) as usize
    }

    /// Independent per-clip RNG stream.
    pub fn clip_rng(&self, clip_id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(clip_id);
        rng
    }
}

/// Force a clip to exactly 4 s at 8 kHz: trim leading/trailing silence
/// (-40 dBFS over 20 ms windows), then tail-truncate or zero-pad.
pub fn standardize_clip(x: &[f64]) -> Vec<f64> {
    let n_win = x.len() / SILENCE_WIN;
    let mut first = None;
    let mut last = None;
    for w in 0..n_win {
        let s = &x[w * SILENCE_WIN..(w + 1) * SILENCE_WIN];
        let rms = (s.iter().map(|v| v * v).sum::<f64>() / SILENCE_WIN as f64).sqrt();
        if rms >= SILENCE_RMS {
            if first.is_none() {
                first = Some(w);
            }
            last = Some(w);
        }
    }
    let trimmed: &[f64] = match (first, last) {
        (Some(a), Some(b)) => &x[a * SILENCE_WIN..((b + 1) * SILENCE_WIN).min(x.len())],
        _ => x,
    };
    let mut out = vec![0.0; CLIP_SAMPLES];
    let n = trimmed.len().min(CLIP_SAMPLES);
    out[..n].copy_from_slice(&trimmed[..n]);
    out
}

/// Sample an 8 kHz waveform at the sensor rate.
pub fn capture_downsample(x: &[f64], p: &DegradationProfile) -> Result<Vec<f64>> {
    p.validate()?;
    let d = p.decimation();
    match p.alias_mode {
        AliasMode::Aliased => Ok(x.iter().step_by(d).copied().collect()),
        AliasMode::AntiAliased => {
            let h = lowpass_fir(0.45 * p.capture_rate as f64, TARGET_RATE as f64, 255);
            let y = filter_same(x, &h);
            Ok(y.iter().step_by(d).copied().collect())
        }
    }
}

/// Transient sensor noise at `rate` Hz: Poisson-timed damped-sinusoid shocks
/// and band-limited turbulence bursts over a weak low-frequency drift.
pub fn synthesize_transient_noise(
    samples: usize,
    rate: u32,
    event_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut out = vec![0.0; samples];
    if event_rate <= 0.0 || samples == 0 {
        return out;
    }
    let sr = rate as f64;
    let dur = samples as f64 / sr;
    // Duct-vibration drift, well below the burst amplitudes.
    for _ in 0..3 {
        let f = rng.gen_range(0.5..8.0);
        let ph = rng.gen_range(0.0..std::f64::consts::TAU);
        let amp = rng.gen_range(0.002..0.004);
        for (i, o) in out.iter_mut().enumerate() {
            *o += amp * (std::f64::consts::TAU * f * i as f64 / sr + ph).sin();
        }
    }
    // Poisson event times via exponential inter-arrivals.
    let mut t = 0.0f64;
    loop {
        let u: f64 = rng.gen_range(1e-12..1.0);
        t += -u.ln() / event_rate;
        if t >= dur {
            break;
        }
        let start = (t * sr) as usize;
        if rng.gen_bool(0.5) {
            // Shock: damped sinusoid, hard-windowed at 4 decay constants.
            let fmax = (0.4 * sr).min(1200.0).max(80.0);
            let f = rng.gen_range(60.0..fmax);
            let tau = rng.gen_range(0.03..0.06);
            let amp = rng.gen_range(0.6..1.2);
            let ph = rng.gen_range(0.0..std::f64::consts::TAU);
            let n = ((4.0 * tau) * sr) as usize;
            for i in 0..n {
                let idx = start + i;
                if idx >= samples {
                    break;
                }
                let ts = i as f64 / sr;
                out[idx] += amp
                    * (-ts / tau).exp()
                    * (std::f64::consts::TAU * f * ts + ph).sin();
            }
        } else {
            // Turbulence: Hann-enveloped, moving-average-smoothed noise.
            let blen = rng.gen_range(0.06..0.10);
            let amp = rng.gen_range(0.4..0.9);
            let n = (blen * sr) as usize;
            let raw: Vec<f64> = (0..n + 8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for i in 0..n {
                let idx = start + i;
                if idx >= samples {
                    break;
                }
                let sm: f64 = raw[i..i + 8].iter().sum::<f64>() / 8.0;
                let env = 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos();
                out[idx] += amp * env * sm;
            }
        }
    }
    out
}

/// Rescale `noise` so the clean-to-noise power ratio is `snr_db`, and mix.
/// `None` means noise-free.
pub fn mix_at_snr(clean: &[f64], noise: &[f64], snr_db: Option<f64>) -> Result<Vec<f64>> {
    let snr = match snr_db {
        None => return Ok(clean.to_vec()),
        Some(s) => s,
    };
    if clean.len() != noise.len() {
        return Err(RebandError::ShapeMismatch(format!(
            "mix: clean {} vs noise {} samples",
            clean.len(),
            noise.len()
        )));
    }
    let p_c: f64 = clean.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64;
    let p_n: f64 = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
    if p_c <= 0.0 {
        return Err(RebandError::InvalidInput("mix: all-zero clean signal".into()));
    }
    if p_n <= 0.0 {
        return Err(RebandError::InvalidInput(
            "mix: all-zero noise with finite SNR requested".into(),
        ));
    }
    let scale = (p_c / (p_n * 10f64.powf(snr / 10.0))).sqrt();
    Ok(clean
        .iter()
        .zip(noise)
        .map(|(c, n)| c + scale * n)
        .collect())
}

/// Produce one (degraded input, clean target) pair from a raw corpus clip.
/// Both members are exactly 4 s on the 8 kHz grid; `clip_id` selects the
/// per-clip RNG stream so datasets are order- and parallelism-independent.
pub fn build_pair(x: &[f64], p: &DegradationProfile, clip_id: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    p.validate()?;
    let target = standardize_clip(x);
    let low = capture_downsample(&target, p)?;
    let mixed = match p.snr_db {
        None => low,
        Some(_) => {
            let mut rng = p.clip_rng(clip_id);
            let noise = synthesize_transient_noise(low.len(), p.capture_rate, p.event_rate, &mut rng);
            if target.iter().all(|v| *v == 0.0) {
                // Silent clip: nothing to scale against; emit it unmixed.
                low
            } else {
                mix_at_snr(&low, &noise, p.snr_db)?
            }
        }
    };
    let mut input = resample_sinc(&mixed, p.capture_rate, TARGET_RATE);
    input.resize(CLIP_SAMPLES, 0.0);
    Ok((input, target))
}
