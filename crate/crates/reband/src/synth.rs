//! Deterministic synthetic speech-like signals.
//!
//! No public speech corpus ships with this repository, so tests and the
//! `synth-corpus` command generate their own material: hash-varied syllables
//! with two moving formants, occasional fricative hiss, and raised-cosine
//! onsets. Everything is closed-form in the sample index, so the same call
//! produces bit-identical output on any platform.

/// Sign-preserving fractional part of `sin`-scrambled input; the classic
/// shader one-liner. Deterministic and good enough for test material.
fn hash(v: f64) -> f64 {
    (v.sin() * 43758.5453123).fract()
}

/// Deterministic white-ish noise in (-3, 1) scaled to roughly unit range.
pub fn hash_noise(n: usize, salt: f64) -> Vec<f64> {
    (0..n).map(|i| hash(i as f64 * 12.9898 + salt) * 2.0 - 1.0).collect()
}

/// Speech-like test clip: `n` samples at `fs`, with `voice` selecting a
/// distinct deterministic voice/utterance.
pub fn pseudo_speech(n: usize, fs: u32, voice: f64) -> Vec<f64> {
    let fs = fs as f64;
    let h = |k: f64, salt: f64| hash(k * 12.9898 + salt * 78.233 + voice * 37.719);

    let mut f0 = Vec::with_capacity(n);
    let mut syl = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / fs;
        let s = (t * 3.5).floor();
        syl.push(s);
        f0.push(110.0 + 50.0 * h(s, 1.0) + 15.0 * (2.0 * std::f64::consts::PI * 5.0 * t).sin());
    }
    // Running phase of the fundamental (inclusive cumulative sum).
    let mut phase = Vec::with_capacity(n);
    let mut acc = 0.0;
    for v in &f0 {
        acc += v / fs;
        phase.push(2.0 * std::f64::consts::PI * acc);
    }

    let hiss = hash_noise(n, 7.0 + voice);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / fs;
        let s = syl[i];
        let f1 = 350.0 + 600.0 * h(s, 2.0);
        let f2 = 1200.0 + 1400.0 * h(s, 3.0);
        let mut x = 0.0;
        for k in 1..30 {
            let fk = k as f64 * f0[i].max(90.0);
            let a = (-((fk - f1) / 180.0).powi(2)).exp()
                + 0.6 * (-((fk - f2) / 300.0).powi(2)).exp()
                + 0.03;
            x += a * (k as f64 * phase[i]).sin();
        }
        // First-difference high-passed hiss stands in for fricatives.
        let hp = hiss[i] - if i > 0 { hiss[i - 1] } else { 0.0 };
        let fric = if h(s, 4.0) > 0.65 { 1.0 } else { 0.0 };
        let amp = 0.35 + 0.65 * h(s, 5.0);
        let ph_s = (t * 3.5).fract();
        let edge = (ph_s.min(1.0 - ph_s) * 8.0).clamp(0.0, 1.0);
        let env = amp * (0.25 + 0.75 * edge);
        out.push((x * (1.0 - 0.8 * fric) + 2.5 * hp * fric) * env);
    }
    out
}
