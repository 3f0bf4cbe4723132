//! Shared waveform utilities: windowed-sinc filtering and band-limited
//! resampling. Everything here operates on `f64` slices.

use std::f64::consts::PI;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn blackman(n: usize, len: usize) -> f64 {
    let x = 2.0 * PI * n as f64 / (len - 1) as f64;
    0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos()
}

/// Odd-length Blackman-windowed-sinc low-pass FIR with unity DC gain.
pub fn lowpass_fir(cutoff_hz: f64, sample_rate: f64, taps: usize) -> Vec<f64> {
    assert!(taps % 2 == 1, "low-pass FIR length must be odd");
    let fc = cutoff_hz / sample_rate;
    let mid = (taps / 2) as f64;
    let mut h: Vec<f64> = (0..taps)
        .map(|n| 2.0 * fc * sinc(2.0 * fc * (n as f64 - mid)) * blackman(n, taps))
        .collect();
    let sum: f64 = h.iter().sum();
    for v in &mut h {
        *v /= sum;
    }
    h
}

/// Zero-phase-style filtering: linear convolution with the group delay of
/// the (linear-phase) kernel removed, output length equal to input length.
pub fn filter_same(x: &[f64], h: &[f64]) -> Vec<f64> {
    let delay = h.len() / 2;
    let mut out = vec![0.0; x.len()];
    for (n, o) in out.iter_mut().enumerate() {
        let m = n + delay;
        let k_lo = m.saturating_sub(x.len() - 1);
        let k_hi = (h.len() - 1).min(m);
        let mut acc = 0.0;
        for k in k_lo..=k_hi {
            acc += h[k] * x[m - k];
        }
        *o = acc;
    }
    out
}

/// Band-limited sample-rate conversion by windowed-sinc interpolation.
///
/// The kernel cutoff sits at the lower of the two Nyquist frequencies, so
/// downsampling through this path is anti-aliased.
pub fn resample_sinc(x: &[f64], from_rate: u32, to_rate: u32) -> Vec<f64> {
    if from_rate == to_rate || x.is_empty() {
        return x.to_vec();
    }
    let out_len = ((x.len() as u64 * to_rate as u64) / from_rate as u64) as usize;
    let step = from_rate as f64 / to_rate as f64;
    // Cutoff normalized to the input rate.
    let c = (to_rate as f64 / from_rate as f64).min(1.0);
    let half = 64.0_f64;
    let reach = (half / c).ceil() as isize;
    let mut out = vec![0.0; out_len];
    for (n, o) in out.iter_mut().enumerate() {
        let t = n as f64 * step;
        let k0 = (t.floor() as isize - reach).max(0);
        let k1 = (t.floor() as isize + reach).min(x.len() as isize - 1);
        let mut acc = 0.0;
        for k in k0..=k1 {
            let d = t - k as f64;
            let w = 0.5 + 0.5 * (PI * c * d / half).cos(); // Hann taper over the reach
            acc += x[k as usize] * c * sinc(c * d) * w;
        }
        *o = acc;
    }
    out
}
