//! Forward and inverse short-time Fourier transforms, plus the exact
//! adjoints of both linear maps (used to backpropagate through waveform
//! reconstruction and through the loss-side spectrograms).
//!
//! Conventions: periodic Hann window, reflective center padding of
//! `n_fft/2`, one-sided spectra with `F = n_fft/2 + 1`, and
//! `T = len/hop + 1` frames.

use crate::ctensor::CArr2;
use crate::error::{RebandError, Result};
use crate::scalar::Scalar;
use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub win_length: usize,
}

impl StftConfig {
    pub fn new(n_fft: usize, hop: usize, win_length: usize) -> Result<Self> {
        let cfg = Self {
            n_fft,
            hop,
            win_length,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.win_length == 0 || self.n_fft == 0 {
            return Err(RebandError::InvalidConfig("stft: zero-sized field".into()));
        }
        if !(self.hop <= self.win_length && self.win_length <= self.n_fft) {
            return Err(RebandError::InvalidConfig(format!(
                "stft: need hop <= win_length <= n_fft, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn frames(&self, len: usize) -> usize {
        len / self.hop + 1
    }

    /// n_fft-length analysis window: periodic Hann over win_length, centered.
    pub fn window<T: Scalar>(&self) -> Vec<T> {
        let mut w = vec![T::zero(); self.n_fft];
        let off = (self.n_fft - self.win_length) / 2;
        for i in 0..self.win_length {
            let v = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / self.win_length as f64).cos();
            w[off + i] = T::of(v);
        }
        w
    }

    /// Squared-window overlap-add envelope for `frames` frames.
    fn window_sq_sum<T: Scalar>(&self, frames: usize) -> Vec<T> {
        let w: Vec<T> = self.window();
        let mut s = vec![T::zero(); (frames - 1) * self.hop + self.n_fft];
        for t in 0..frames {
            let a = t * self.hop;
            for (i, wi) in w.iter().enumerate() {
                s[a + i] += *wi * *wi;
            }
        }
        s
    }

    /// The inverse transform divides by the squared-window envelope; fail
    /// loudly if the configuration leaves holes in the interior.
    pub fn check_cola<T: Scalar>(&self, frames: usize, len: usize) -> Result<()> {
        let s = self.window_sq_sum::<T>(frames);
        let pad = self.n_fft / 2;
        let hi = (pad + len).min(s.len());
        for v in &s[pad..hi] {
            if Scalar::to_f64(*v) < 1e-8 {
                return Err(RebandError::InvalidConfig(format!(
                    "stft config {self:?} does not satisfy the overlap-add condition"
                )));
            }
        }
        Ok(())
    }
}

/// A one-sided complex spectrogram with its provenance.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram<T: Scalar> {
    /// F x T complex bins.
    pub data: CArr2<T>,
    pub cfg: StftConfig,
    pub sample_rate: u32,
}

fn fft_forward<T: Scalar>(buf: &mut [Complex<T>]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(buf.len()).process(buf);
}

fn fft_inverse<T: Scalar>(buf: &mut [Complex<T>]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(buf.len()).process(buf);
}

/// Reflect-pad `x` by `pad` samples on both sides.
fn reflect_pad<T: Scalar>(x: &[T], pad: usize, total: usize) -> Result<Vec<T>> {
    let len = x.len();
    if len <= pad {
        return Err(RebandError::InvalidInput(format!(
            "stft: input of {len} samples too short for reflective padding of {pad}"
        )));
    }
    let mut out = vec![T::zero(); total];
    out[pad..pad + len].copy_from_slice(x);
    for i in 0..pad {
        out[pad - 1 - i] = x[i + 1];
    }
    let right = total - pad - len;
    for i in 0..right {
        out[pad + len + i] = x[len - 2 - i];
    }
    Ok(out)
}

/// Adjoint of [`reflect_pad`]: fold padded-region gradients back.
fn reflect_pad_adjoint<T: Scalar>(g: &[T], pad: usize, len: usize) -> Vec<T> {
    let mut out = vec![T::zero(); len];
    for (i, o) in out.iter_mut().enumerate() {
        *o = g[pad + i];
    }
    for i in 0..pad {
        out[i + 1] += g[pad - 1 - i];
    }
    let right = g.len() - pad - len;
    for i in 0..right {
        out[len - 2 - i] += g[pad + len + i];
    }
    out
}

/// Forward STFT of a waveform.
pub fn stft<T: Scalar>(x: &[T], cfg: &StftConfig, sample_rate: u32) -> Result<ComplexSpectrogram<T>> {
    cfg.validate()?;
    if x.is_empty() {
        return Err(RebandError::InvalidInput("stft: empty input".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(RebandError::InvalidInput("stft: non-finite input".into()));
    }
    let n = cfg.n_fft;
    let pad = n / 2;
    let frames = cfg.frames(x.len());
    let padded = reflect_pad(x, pad, x.len() + 2 * pad)?;
    let w: Vec<T> = cfg.window();
    let bins = cfg.bins();
    let mut re = Array2::<T>::zeros((bins, frames));
    let mut im = Array2::<T>::zeros((bins, frames));
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    for t in 0..frames {
        let a = t * cfg.hop;
        for i in 0..n {
            buf[i] = Complex::new(padded[a + i] * w[i], T::zero());
        }
        fft_forward(&mut buf);
        for k in 0..bins {
            re[[k, t]] = buf[k].re;
            im[[k, t]] = buf[k].im;
        }
    }
    Ok(ComplexSpectrogram {
        data: CArr2 { re, im },
        cfg: *cfg,
        sample_rate,
    })
}

/// Inverse STFT by squared-window-normalized overlap-add.
pub fn istft<T: Scalar>(spec: &ComplexSpectrogram<T>, out_len: usize) -> Result<Vec<T>> {
    let cfg = &spec.cfg;
    cfg.validate()?;
    let (bins, frames) = spec.data.re.dim();
    if bins != cfg.bins() {
        return Err(RebandError::ShapeMismatch(format!(
            "istft: {bins} bins but config implies {}",
            cfg.bins()
        )));
    }
    cfg.check_cola::<T>(frames, out_len)?;
    let n = cfg.n_fft;
    let pad = n / 2;
    let w: Vec<T> = cfg.window();
    let total = (frames - 1) * cfg.hop + n;
    let mut acc = vec![T::zero(); total];
    let wsum = cfg.window_sq_sum::<T>(frames);
    let inv_n = T::one() / T::of(n as f64);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    for t in 0..frames {
        for k in 0..bins {
            buf[k] = Complex::new(spec.data.re[[k, t]], spec.data.im[[k, t]]);
        }
        for k in bins..n {
            let m = n - k;
            buf[k] = Complex::new(spec.data.re[[m, t]], -spec.data.im[[m, t]]);
        }
        fft_inverse(&mut buf);
        let a = t * cfg.hop;
        for i in 0..n {
            acc[a + i] += buf[i].re * inv_n * w[i];
        }
    }
    let tiny = T::of(1e-12);
    let mut out = vec![T::zero(); out_len];
    for (i, o) in out.iter_mut().enumerate() {
        let idx = pad + i;
        if idx < total {
            let d = wsum[idx];
            if d > tiny {
                *o = acc[idx] / d;
            }
        }
    }
    Ok(out)
}

/// Adjoint of the forward STFT as a real-linear map: maps a spectrogram
/// cotangent to a waveform cotangent.
pub fn stft_adjoint<T: Scalar>(gspec: &CArr2<T>, cfg: &StftConfig, len: usize) -> Vec<T> {
    let n = cfg.n_fft;
    let pad = n / 2;
    let bins = cfg.bins();
    let frames = gspec.re.dim().1;
    let w: Vec<T> = cfg.window();
    let mut gpad = vec![T::zero(); len + 2 * pad];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    for t in 0..frames {
        for item in buf.iter_mut() {
            *item = Complex::new(T::zero(), T::zero());
        }
        for k in 0..bins {
            buf[k] = Complex::new(gspec.re[[k, t]], gspec.im[[k, t]]);
        }
        fft_inverse(&mut buf);
        let a = t * cfg.hop;
        for i in 0..n {
            gpad[a + i] += buf[i].re * w[i];
        }
    }
    reflect_pad_adjoint(&gpad, pad, len)
}

/// Adjoint of [`istft`]: maps a waveform cotangent to a spectrogram cotangent.
pub fn istft_adjoint<T: Scalar>(gy: &[T], cfg: &StftConfig, frames: usize) -> CArr2<T> {
    let n = cfg.n_fft;
    let pad = n / 2;
    let bins = cfg.bins();
    let w: Vec<T> = cfg.window();
    let wsum = cfg.window_sq_sum::<T>(frames);
    let total = (frames - 1) * cfg.hop + n;
    let tiny = T::of(1e-12);
    let mut dacc = vec![T::zero(); total];
    for (i, g) in gy.iter().enumerate() {
        let idx = pad + i;
        if idx < total && wsum[idx] > tiny {
            dacc[idx] = *g / wsum[idx];
        }
    }
    let inv_n = T::one() / T::of(n as f64);
    let mut re = Array2::<T>::zeros((bins, frames));
    let mut im = Array2::<T>::zeros((bins, frames));
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    let two = T::of(2.0);
    for t in 0..frames {
        let a = t * cfg.hop;
        for i in 0..n {
            buf[i] = Complex::new(dacc[a + i] * w[i] * inv_n, T::zero());
        }
        fft_forward(&mut buf);
        for k in 0..bins {
            let scale = if k == 0 || k == n / 2 { T::one() } else { two };
            re[[k, t]] = buf[k].re * scale;
            im[[k, t]] = buf[k].im * scale;
        }
    }
    CArr2 { re, im }
}
