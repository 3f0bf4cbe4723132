//! Complex multi-resolution STFT loss.
//!
//! For each resolution the spectral-convergence and log-magnitude terms are
//! applied separately to the magnitudes of the real and imaginary parts of
//! the spectrogram, then averaged over resolutions. The analytic gradient
//! with respect to the estimated waveform goes through the exact STFT
//! adjoint, so the loss can drive waveform-domain training directly.

use crate::ctensor::CArr2;
use crate::error::{RebandError, Result};
use crate::scalar::Scalar;
use crate::stft::{stft, stft_adjoint, StftConfig};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub resolutions: Vec<StftConfig>,
    pub eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            resolutions: vec![
                StftConfig {
                    n_fft: 256,
                    hop: 128,
                    win_length: 256,
                },
                StftConfig {
                    n_fft: 512,
                    hop: 256,
                    win_length: 512,
                },
                StftConfig {
                    n_fft: 1024,
                    hop: 512,
                    win_length: 1024,
                },
            ],
            eps: 1e-7,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolutions.is_empty() {
            return Err(RebandError::InvalidConfig("loss: no resolutions".into()));
        }
        for r in &self.resolutions {
            r.validate()?;
        }
        if !(self.eps > 0.0) {
            return Err(RebandError::InvalidConfig("loss: eps must be > 0".into()));
        }
        Ok(())
    }
}

/// Spectral convergence + log-magnitude terms for one magnitude plane, with
/// the gradient w.r.t. the estimated magnitudes accumulated into `gmag`.
fn mag_terms<T: Scalar>(
    mref: &Array2<T>,
    mest: &Array2<T>,
    eps: T,
    weight: T,
    gmag: Option<&mut Array2<T>>,
) -> (T, T) {
    let tiny = T::of(1e-30);
    let mut diff_sq = T::zero();
    let mut ref_sq = T::zero();
    let mut mag_sum = T::zero();
    for (r, e) in mref.iter().zip(mest.iter()) {
        let d = *r - *e;
        diff_sq += d * d;
        ref_sq += *r * *r;
        mag_sum += ((*r + eps).ln() - (*e + eps).ln()).abs();
    }
    let diff_norm = diff_sq.sqrt();
    let ref_norm = ref_sq.sqrt().max(tiny);
    let count = T::of(mref.len() as f64);
    let l_sc = diff_norm / ref_norm;
    let l_mag = mag_sum / count;
    if let Some(g) = gmag {
        let sc_scale = weight / (diff_norm.max(tiny) * ref_norm);
        for ((gv, r), e) in g.iter_mut().zip(mref.iter()).zip(mest.iter()) {
            *gv += sc_scale * (*e - *r);
            let s = (*e + eps).ln() - (*r + eps).ln();
            if s != T::zero() {
                *gv += weight * s.signum() / ((*e + eps) * count);
            }
        }
    }
    (l_sc, l_mag)
}

fn plane_loss<T: Scalar>(
    sref: &Array2<T>,
    sest: &Array2<T>,
    eps: T,
    weight: T,
    gplane: Option<&mut Array2<T>>,
) -> T {
    let mref = sref.mapv(|v| v.abs());
    let mest = sest.mapv(|v| v.abs());
    match gplane {
        None => {
            let (sc, mag) = mag_terms(&mref, &mest, eps, weight, None);
            sc + mag
        }
        Some(g) => {
            let mut gmag = Array2::<T>::zeros(mref.dim());
            let (sc, mag) = mag_terms(&mref, &mest, eps, weight, Some(&mut gmag));
            // Chain through |.|; subgradient 0 at exactly 0.
            for ((gv, s), gm) in g.iter_mut().zip(sest.iter()).zip(gmag.iter()) {
                *gv += *gm * s.signum_or_zero();
            }
            sc + mag
        }
    }
}

trait SignumOrZero {
    fn signum_or_zero(self) -> Self;
}
impl<T: Scalar> SignumOrZero for T {
    fn signum_or_zero(self) -> Self {
        if self == T::zero() {
            T::zero()
        } else {
            self.signum()
        }
    }
}

fn loss_impl<T: Scalar>(
    est: &[T],
    reference: &[T],
    cfg: &LossConfig,
    want_grad: bool,
) -> Result<(T, Option<Vec<T>>)> {
    cfg.validate()?;
    if est.len() != reference.len() {
        return Err(RebandError::ShapeMismatch(format!(
            "loss: estimate has {} samples, reference {}",
            est.len(),
            reference.len()
        )));
    }
    let eps = T::of(cfg.eps);
    let weight = T::one() / T::of(cfg.resolutions.len() as f64);
    let mut total = T::zero();
    let mut gwave = if want_grad {
        Some(vec![T::zero(); est.len()])
    } else {
        None
    };
    for rcfg in &cfg.resolutions {
        let sref = stft(reference, rcfg, 0)?;
        let sest = stft(est, rcfg, 0)?;
        if let Some(gw) = gwave.as_mut() {
            let dim = sest.data.re.dim();
            let mut gspec = CArr2 {
                re: Array2::<T>::zeros(dim),
                im: Array2::<T>::zeros(dim),
            };
            total += plane_loss(&sref.data.re, &sest.data.re, eps, weight, Some(&mut gspec.re));
            total += plane_loss(&sref.data.im, &sest.data.im, eps, weight, Some(&mut gspec.im));
            let gx = stft_adjoint(&gspec, rcfg, est.len());
            for (a, b) in gw.iter_mut().zip(gx) {
                *a += b;
            }
        } else {
            total += plane_loss(&sref.data.re, &sest.data.re, eps, weight, None);
            total += plane_loss(&sref.data.im, &sest.data.im, eps, weight, None);
        }
    }
    total *= weight;
    if !total.is_finite() {
        return Err(RebandError::Numeric("loss: non-finite value".into()));
    }
    Ok((total, gwave))
}

/// Complex multi-resolution STFT loss between an estimate and a reference.
pub fn multires_stft_loss<T: Scalar>(est: &[T], reference: &[T], cfg: &LossConfig) -> Result<T> {
    loss_impl(est, reference, cfg, false).map(|(l, _)| l)
}

/// Loss value together with its gradient w.r.t. the estimated waveform.
pub fn multires_stft_loss_grad<T: Scalar>(
    est: &[T],
    reference: &[T],
    cfg: &LossConfig,
) -> Result<(T, Vec<T>)> {
    let (l, g) = loss_impl(est, reference, cfg, true)?;
    Ok((l, g.unwrap()))
}
