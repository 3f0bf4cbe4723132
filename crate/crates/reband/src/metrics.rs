//! Objective speech metrics (LSD, SI-SDR, STOI) and batch evaluation reports.
//!
//! LSD, SI-SDR and STOI are computed natively. PESQ and NISQA-MOS scores come
//! from external command adapters: any executable that accepts
//! `<cmd> <ref.wav> <est.wav>` and prints a single scalar on stdout. A missing
//! or failing adapter marks the metric absent in the report; it is never
//! silently zero-filled.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::audio::write_wav_mono16;
use crate::error::{RebandError, Result};
use crate::dsp::resample_sinc;
use crate::stft::{stft, StftConfig};

/// Analysis resolution for LSD. The choice is fixed so reported numbers are
/// comparable across runs; it is recorded in report metadata.
pub const LSD_N_FFT: usize = 512;
pub const LSD_HOP: usize = 128;
const LSD_EPS: f64 = 1e-10;

/// Log-spectral distance between two equal-length waveforms.
///
/// With `X = log10(|STFT|^2 + eps)`: mean over frames of the RMS over bins of
/// `X_ref - X_est`. Symmetric and non-negative.
pub fn lsd(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(RebandError::ShapeMismatch(format!(
            "lsd: length mismatch {} vs {}",
            reference.len(),
            estimate.len()
        )));
    }
    let cfg = StftConfig::new(LSD_N_FFT, LSD_HOP, LSD_N_FFT)?;
    let sr = stft(reference, &cfg, 8000)?;
    let se = stft(estimate, &cfg, 8000)?;
    let (bins, frames) = (cfg.bins(), cfg.frames(reference.len()));
    let mut acc = 0.0;
    for t in 0..frames {
        let mut sq = 0.0;
        for f in 0..bins {
            let pr = sr.data.re[[f, t]].powi(2) + sr.data.im[[f, t]].powi(2);
            let pe = se.data.re[[f, t]].powi(2) + se.data.im[[f, t]].powi(2);
            let d = (pr + LSD_EPS).log10() - (pe + LSD_EPS).log10();
            sq += d * d;
        }
        acc += (sq / bins as f64).sqrt();
    }
    Ok(acc / frames as f64)
}

/// Scale-invariant signal-to-distortion ratio in dB.
///
/// The estimate is first projected onto the reference, so any positive gain on
/// the estimate leaves the score unchanged. Capped at +100 dB once the
/// distortion energy falls below 1e-12 of the projected-signal energy.
pub fn si_sdr(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(RebandError::ShapeMismatch(format!(
            "si_sdr: length mismatch {} vs {}",
            reference.len(),
            estimate.len()
        )));
    }
    let rr: f64 = reference.iter().map(|v| v * v).sum();
    if rr <= 0.0 {
        return Err(RebandError::InvalidInput("si_sdr: zero reference".into()));
    }
    let er: f64 = estimate.iter().zip(reference).map(|(e, r)| e * r).sum();
    let alpha = er / rr;
    let signal: f64 = alpha * alpha * rr;
    let distortion: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(r, e)| {
            let d = alpha * r - e;
            d * d
        })
        .sum();
    if distortion < 1e-12 * signal {
        return Ok(100.0);
    }
    Ok(10.0 * (signal / distortion).log10())
}

// STOI constants (Taal et al., 2011): 10 kHz analysis rate, 256-sample frames
// with 50% overlap, 512-point FFT, 15 one-third-octave bands from 150 Hz,
// 30-frame (384 ms) segments, -15 dB clipping, 40 dB silent-frame range.
const STOI_FS: u32 = 10_000;
const STOI_FRAME: usize = 256;
const STOI_HOP: usize = 128;
const STOI_NFFT: usize = 512;
const STOI_BANDS: usize = 15;
const STOI_MIN_FREQ: f64 = 150.0;
const STOI_SEG: usize = 30;
const STOI_BETA_DB: f64 = -15.0;
const STOI_DYN_RANGE_DB: f64 = 40.0;
const STOI_EPS: f64 = 1e-15;

fn stoi_window() -> Vec<f64> {
    // Symmetric Hann with the zero endpoints dropped.
    let n = STOI_FRAME + 2;
    (1..=STOI_FRAME)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

fn frame_starts(len: usize) -> Vec<usize> {
    if len < STOI_FRAME {
        return Vec::new();
    }
    (0..=(len - STOI_FRAME)).step_by(STOI_HOP).collect()
}

/// Drop frames where the reference is more than 40 dB below its loudest frame,
/// overlap-adding the retained frames of both signals back into waveforms.
fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = stoi_window();
    let starts = frame_starts(x.len());
    let energies: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e: f64 = (0..STOI_FRAME).map(|i| (x[s + i] * w[i]).powi(2)).sum();
            20.0 * (e.sqrt() + STOI_EPS).log10()
        })
        .collect();
    let max_e = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<usize> = (0..starts.len())
        .filter(|&i| energies[i] > max_e - STOI_DYN_RANGE_DB)
        .collect();
    let out_len = if keep.is_empty() {
        0
    } else {
        (keep.len() - 1) * STOI_HOP + STOI_FRAME
    };
    let mut xs = vec![0.0; out_len];
    let mut ys = vec![0.0; out_len];
    for (j, &i) in keep.iter().enumerate() {
        let src = starts[i];
        let dst = j * STOI_HOP;
        for k in 0..STOI_FRAME {
            xs[dst + k] += x[src + k] * w[k];
            ys[dst + k] += y[src + k] * w[k];
        }
    }
    (xs, ys)
}

/// One-third-octave band magnitudes: rows of |STFT|^2 summed per band, sqrt.
/// Returns (bands x frames).
fn third_octave_bands(x: &[f64]) -> Vec<Vec<f64>> {
    let w = stoi_window();
    let starts = frame_starts(x.len());
    let bins = STOI_NFFT / 2 + 1;
    // Band edge -> FFT bin mapping: nearest bin to cf * 2^(+-1/6).
    let bin_hz = STOI_FS as f64 / STOI_NFFT as f64;
    let nearest = |f: f64| -> usize {
        let mut best = 0usize;
        let mut err = f64::INFINITY;
        for b in 0..bins {
            let d = (b as f64 * bin_hz - f).abs();
            if d < err {
                err = d;
                best = b;
            }
        }
        best
    };
    let mut edges = Vec::with_capacity(STOI_BANDS);
    for k in 0..STOI_BANDS {
        let cf = STOI_MIN_FREQ * 2f64.powf(k as f64 / 3.0);
        edges.push((nearest(cf * 2f64.powf(-1.0 / 6.0)), nearest(cf * 2f64.powf(1.0 / 6.0))));
    }

    let mut planner = rustfft::FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(STOI_NFFT);
    let mut out = vec![vec![0.0; starts.len()]; STOI_BANDS];
    for (t, &s) in starts.iter().enumerate() {
        let mut buf = vec![rustfft::num_complex::Complex::new(0.0, 0.0); STOI_NFFT];
        for i in 0..STOI_FRAME {
            buf[i].re = x[s + i] * w[i];
        }
        fft.process(&mut buf);
        for (j, &(lo, hi)) in edges.iter().enumerate() {
            let e: f64 = (lo..hi).map(|b| buf[b].norm_sqr()).sum();
            out[j][t] = e.sqrt();
        }
    }
    out
}

/// Short-time objective intelligibility of `estimate` against `reference`.
///
/// Inputs are waveforms at `sample_rate`; both are resampled to 10 kHz
/// internally. Requires at least 30 analysis frames (384 ms) of
/// speech-active signal.
pub fn stoi(reference: &[f64], estimate: &[f64], sample_rate: u32) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(RebandError::ShapeMismatch(format!(
            "stoi: length mismatch {} vs {}",
            reference.len(),
            estimate.len()
        )));
    }
    let (x, y) = if sample_rate == STOI_FS {
        (reference.to_vec(), estimate.to_vec())
    } else {
        (
            resample_sinc(reference, sample_rate, STOI_FS),
            resample_sinc(estimate, sample_rate, STOI_FS),
        )
    };
    let (x, y) = remove_silent_frames(&x, &y);
    let frames = frame_starts(x.len()).len();
    if frames < STOI_SEG {
        return Err(RebandError::InvalidInput(format!(
            "stoi: only {frames} speech-active frames; need at least {STOI_SEG} (384 ms)"
        )));
    }
    let xb = third_octave_bands(&x);
    let yb = third_octave_bands(&y);
    let clip = 10f64.powf(-STOI_BETA_DB / 20.0);

    let mut total = 0.0;
    let mut count = 0usize;
    for m in STOI_SEG - 1..frames {
        for j in 0..STOI_BANDS {
            let xs = &xb[j][m + 1 - STOI_SEG..=m];
            let ys = &yb[j][m + 1 - STOI_SEG..=m];
            let nx: f64 = xs.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny: f64 = ys.iter().map(|v| v * v).sum::<f64>().sqrt();
            let alpha = nx / (ny + STOI_EPS);
            // Normalize the degraded segment to the clean energy, then clip
            // its samples to at most (1 + 10^(15/20)) of the clean ones.
            let yp: Vec<f64> = xs
                .iter()
                .zip(ys)
                .map(|(&xv, &yv)| (alpha * yv).min(xv * (1.0 + clip)))
                .collect();
            let mx = xs.iter().sum::<f64>() / STOI_SEG as f64;
            let my = yp.iter().sum::<f64>() / STOI_SEG as f64;
            let mut num = 0.0;
            let mut dx = 0.0;
            let mut dy = 0.0;
            for i in 0..STOI_SEG {
                let a = xs[i] - mx;
                let b = yp[i] - my;
                num += a * b;
                dx += a * a;
                dy += b * b;
            }
            total += num / (dx.sqrt() * dy.sqrt() + STOI_EPS);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// External scorer: a command invoked as `<command> <ref.wav> <est.wav>` that
/// prints one scalar on stdout. Nonzero exit or unparseable output marks the
/// metric absent for the whole run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExternalScorer {
    pub command: String,
}

fn run_scorer(cmd: &str, ref_path: &Path, est_path: &Path) -> std::result::Result<f64, String> {
    let output = Command::new(cmd)
        .arg(ref_path)
        .arg(est_path)
        .output()
        .map_err(|e| format!("failed to launch `{cmd}`: {e}"))?;
    if !output.status.success() {
        return Err(format!("`{cmd}` exited with {}", output.status));
    }
    let text = String::from_utf8_lossy(&output.stdout);
    text.trim()
        .parse::<f64>()
        .map_err(|_| format!("`{cmd}` printed non-scalar output: {:?}", text.trim()))
}

/// One evaluation pair: a clip name plus reference and estimate waveforms at
/// 8 kHz.
pub struct EvalPair {
    pub name: String,
    pub reference: Vec<f64>,
    pub estimate: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClipMetrics {
    pub name: String,
    pub lsd: f64,
    pub si_sdr: f64,
    pub stoi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pesq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nisqa: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Identifier of the degradation profile the estimates came from.
    pub profile: String,
    /// Identifier of the checkpoint (or "baseline" for raw inputs).
    pub checkpoint: String,
    pub lsd_n_fft: usize,
    pub lsd_hop: usize,
    pub clips: Vec<ClipMetrics>,
    pub mean_lsd: f64,
    pub mean_si_sdr: f64,
    pub mean_stoi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_pesq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_nisqa: Option<f64>,
    /// Reasons external metrics are absent, keyed by metric name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub absent: BTreeMap<String, String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:8.3}"),
        None => format!("{:>8}", "-"),
    }
}

impl EvalReport {
    /// Aligned text table; column order L (LSD), N (NISQA), S (SI-SDR),
    /// P (PESQ), ST (STOI).
    pub fn text_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "{:<24} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
            "clip", "L", "N", "S", "P", "ST"
        ));
        for c in &self.clips {
            s.push_str(&format!(
                "{:<24} {:8.3} {} {:8.3} {} {:8.3}\n",
                c.name,
                c.lsd,
                fmt_opt(c.nisqa),
                c.si_sdr,
                fmt_opt(c.pesq),
                c.stoi
            ));
        }
        s.push_str(&format!(
            "{:<24} {:8.3} {} {:8.3} {} {:8.3}\n",
            "mean",
            self.mean_lsd,
            fmt_opt(self.mean_nisqa),
            self.mean_si_sdr,
            fmt_opt(self.mean_pesq),
            self.mean_stoi
        ));
        for (metric, reason) in &self.absent {
            s.push_str(&format!("# {metric} absent: {reason}\n"));
        }
        s
    }
}

/// Score every pair and aggregate. External scorers, when configured, run per
/// clip over temporary wav files; a failure marks that metric absent for the
/// run and evaluation continues.
pub fn evaluate_pairs(
    pairs: &[EvalPair],
    sample_rate: u32,
    profile: &str,
    checkpoint: &str,
    pesq_cmd: Option<&str>,
    nisqa_cmd: Option<&str>,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(RebandError::InvalidInput("evaluate_pairs: no clips".into()));
    }
    let mut absent: BTreeMap<String, String> = BTreeMap::new();
    let tmp = if pesq_cmd.is_some() || nisqa_cmd.is_some() {
        Some(tempfile::tempdir()?)
    } else {
        None
    };

    let mut clips = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let mut m = ClipMetrics {
            name: pair.name.clone(),
            lsd: lsd(&pair.reference, &pair.estimate)?,
            si_sdr: si_sdr(&pair.reference, &pair.estimate)?,
            stoi: stoi(&pair.reference, &pair.estimate, sample_rate)?,
            pesq: None,
            nisqa: None,
        };
        if let Some(dir) = &tmp {
            let rp = dir.path().join(format!("{}_ref.wav", pair.name));
            let ep = dir.path().join(format!("{}_est.wav", pair.name));
            write_wav_mono16(&rp, &pair.reference, sample_rate)?;
            write_wav_mono16(&ep, &pair.estimate, sample_rate)?;
            for (metric, cmd, slot) in [
                ("pesq", pesq_cmd, &mut m.pesq),
                ("nisqa", nisqa_cmd, &mut m.nisqa),
            ] {
                let Some(cmd) = cmd else { continue };
                if absent.contains_key(metric) {
                    continue;
                }
                match run_scorer(cmd, &rp, &ep) {
                    Ok(v) => *slot = Some(v),
                    Err(reason) => {
                        absent.insert(metric.to_string(), reason);
                    }
                }
            }
        }
        clips.push(m);
    }

    // If an adapter died partway through, drop its partial per-clip values so
    // the aggregate is never a mean over a subset.
    for metric in absent.keys() {
        for c in &mut clips {
            match metric.as_str() {
                "pesq" => c.pesq = None,
                "nisqa" => c.nisqa = None,
                _ => {}
            }
        }
    }

    let n = clips.len() as f64;
    let mean_of = |f: &dyn Fn(&ClipMetrics) -> f64| clips.iter().map(|c| f(c)).sum::<f64>() / n;
    let mean_opt = |f: &dyn Fn(&ClipMetrics) -> Option<f64>| -> Option<f64> {
        let vals: Vec<f64> = clips.iter().filter_map(|c| f(c)).collect();
        if vals.len() == clips.len() {
            Some(vals.iter().sum::<f64>() / n)
        } else {
            None
        }
    };
    Ok(EvalReport {
        profile: profile.to_string(),
        checkpoint: checkpoint.to_string(),
        lsd_n_fft: LSD_N_FFT,
        lsd_hop: LSD_HOP,
        mean_lsd: mean_of(&|c| c.lsd),
        mean_si_sdr: mean_of(&|c| c.si_sdr),
        mean_stoi: mean_of(&|c| c.stoi),
        mean_pesq: mean_opt(&|c| c.pesq),
        mean_nisqa: mean_opt(&|c| c.nisqa),
        absent,
        clips,
    })
}
