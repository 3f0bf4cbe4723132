//! Metric oracles and invariants: LSD against a direct double-loop oracle,
//! SI-SDR closed-form anchors, STOI against values frozen from an independent
//! numpy reference (tools/stoi_ref.py), and report plumbing.

use reband::metrics::{evaluate_pairs, lsd, si_sdr, stoi, EvalPair};
use reband::synth::{hash_noise, pseudo_speech};

const SR: u32 = 8000;
const N: usize = 4 * 8000;

fn speech() -> Vec<f64> {
    pseudo_speech(N, SR, 0.0)
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn mix_snr(clean: &[f64], noise: &[f64], snr_db: f64) -> Vec<f64> {
    let scale = rms(clean) / rms(noise) * 10f64.powf(-snr_db / 20.0);
    clean.iter().zip(noise).map(|(c, n)| c + scale * n).collect()
}

// ---------------------------------------------------------------- LSD

#[test]
fn lsd_zero_for_identity() {
    let x = speech();
    assert!(lsd(&x, &x).unwrap() < 1e-12);
}

#[test]
fn lsd_double_amplitude_anchor() {
    // Broadband noise keeps every bin well above the floor, so the log power
    // ratio is uniformly log10(4).
    let x = hash_noise(N, 3.0);
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let v = lsd(&x, &y).unwrap();
    assert!((v - 4f64.log10()).abs() < 1e-3, "lsd(x,2x) = {v}");
}

#[test]
fn lsd_matches_double_loop_oracle() {
    // Independent re-computation: reflect-pad, frame, naive DFT, per-frame
    // RMS of log-power differences, mean over frames.
    let x = hash_noise(4000, 1.0);
    let y: Vec<f64> = speech()[..4000].to_vec();
    let v = lsd(&x, &y).unwrap();

    let (n_fft, hop) = (512usize, 128usize);
    let pad = n_fft / 2;
    let reflect = |x: &[f64]| -> Vec<f64> {
        let n = x.len();
        let mut out = Vec::with_capacity(n + 2 * pad);
        for i in 0..pad {
            out.push(x[pad - i]);
        }
        out.extend_from_slice(x);
        for i in 0..pad {
            out.push(x[n - 2 - i]);
        }
        out
    };
    let win: Vec<f64> = (0..n_fft)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n_fft as f64).cos())
        .collect();
    let spec = |x: &[f64], f: usize, t: usize| -> f64 {
        let xp = reflect(x);
        let (mut re, mut im) = (0.0, 0.0);
        for i in 0..n_fft {
            let v = xp[t * hop + i] * win[i];
            let ang = -2.0 * std::f64::consts::PI * f as f64 * i as f64 / n_fft as f64;
            re += v * ang.cos();
            im += v * ang.sin();
        }
        re * re + im * im
    };
    let frames = x.len() / hop + 1;
    let bins = n_fft / 2 + 1;
    let mut acc = 0.0;
    for t in 0..frames {
        let mut sq = 0.0;
        for f in 0..bins {
            let d = (spec(&x, f, t) + 1e-10).log10() - (spec(&y, f, t) + 1e-10).log10();
            sq += d * d;
        }
        acc += (sq / bins as f64).sqrt();
    }
    let oracle = acc / frames as f64;
    assert!(
        (v - oracle).abs() / oracle < 1e-6,
        "lsd {v} vs oracle {oracle}"
    );
}

#[test]
fn lsd_symmetric_and_rejects_mismatch() {
    let x = speech();
    let y = hash_noise(N, 2.0);
    let a = lsd(&x, &y).unwrap();
    let b = lsd(&y, &x).unwrap();
    assert!((a - b).abs() < 1e-12);
    assert!(a > 0.0);
    assert!(lsd(&x, &y[..N - 1]).is_err());
}

// ---------------------------------------------------------------- SI-SDR

#[test]
fn si_sdr_identity_caps_at_100() {
    let x = speech();
    assert_eq!(si_sdr(&x, &x).unwrap(), 100.0);
    let y: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
    assert_eq!(si_sdr(&x, &y).unwrap(), 100.0);
}

#[test]
fn si_sdr_closed_form_anchor() {
    // ref=[1,0], est=[1,1]: alpha=1, signal=1, distortion=1 -> 0 dB.
    let v = si_sdr(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
    assert!(v.abs() < 1e-12, "expected 0 dB, got {v}");
}

#[test]
fn si_sdr_scale_invariance() {
    let x = speech();
    let y = mix_snr(&x, &hash_noise(N, 9.0), 5.0);
    let base = si_sdr(&x, &y).unwrap();
    for a in [0.001, 0.37, 42.0] {
        let ya: Vec<f64> = y.iter().map(|v| a * v).collect();
        assert!((si_sdr(&x, &ya).unwrap() - base).abs() < 1e-9);
    }
}

#[test]
fn si_sdr_rejects_zero_reference() {
    assert!(si_sdr(&[0.0; 16], &[1.0; 16]).is_err());
}

// ---------------------------------------------------------------- STOI

#[test]
fn stoi_identity_is_one() {
    let x = speech();
    let v = stoi(&x, &x, SR).unwrap();
    assert!((v - 1.0).abs() < 1e-6, "stoi(x,x) = {v}");
}

#[test]
fn stoi_white_noise_estimate_scores_low() {
    // Frozen reference value 0.274122 from tools/stoi_ref.py; tolerance
    // covers the different resampling kernels (windowed sinc vs polyphase).
    let x = speech();
    let n = hash_noise(N, 0.0);
    let scale = rms(&x) / rms(&n);
    let noise: Vec<f64> = n.iter().map(|v| v * scale).collect();
    let v = stoi(&x, &noise, SR).unwrap();
    assert!((v - 0.274122).abs() < 0.02, "stoi vs noise = {v}");
    assert!(v < 0.3);
}

#[test]
fn stoi_monotone_in_snr_and_matches_reference() {
    let x = speech();
    let n = hash_noise(N, 0.0);
    // Frozen from tools/stoi_ref.py at SNRs {-10, 0, 10, 20} dB.
    let expected = [0.452950, 0.624342, 0.791349, 0.914375];
    let mut prev = f64::NEG_INFINITY;
    for (snr, exp) in [-10.0, 0.0, 10.0, 20.0].iter().zip(expected) {
        let v = stoi(&x, &mix_snr(&x, &n, *snr), SR).unwrap();
        assert!((v - exp).abs() < 0.02, "snr {snr}: {v} vs reference {exp}");
        assert!(v >= prev, "not monotone at snr {snr}");
        prev = v;
    }
}

#[test]
fn stoi_invariant_to_estimate_gain() {
    let x = speech();
    let y = mix_snr(&x, &hash_noise(N, 0.0), 5.0);
    let base = stoi(&x, &y, SR).unwrap();
    let y2: Vec<f64> = y.iter().map(|v| 2.5 * v).collect();
    assert!((stoi(&x, &y2, SR).unwrap() - base).abs() < 1e-9);
}

#[test]
fn stoi_rejects_short_input() {
    let x = pseudo_speech(1600, SR, 0.0); // 0.2 s
    assert!(stoi(&x, &x, SR).is_err());
}

// ---------------------------------------------------------------- reports

fn pairs() -> Vec<EvalPair> {
    (0..3)
        .map(|i| {
            let r = pseudo_speech(N, SR, i as f64);
            EvalPair {
                name: format!("clip{i}"),
                reference: r.clone(),
                estimate: r,
            }
        })
        .collect()
}

#[test]
fn identity_report_hits_metric_ceilings() {
    let rep = evaluate_pairs(&pairs(), SR, "p", "oracle", None, None).unwrap();
    assert!(rep.mean_lsd < 1e-9);
    assert_eq!(rep.mean_si_sdr, 100.0);
    assert!((rep.mean_stoi - 1.0).abs() < 1e-6);
    assert!(rep.mean_pesq.is_none() && rep.mean_nisqa.is_none());
    // Aggregate = arithmetic mean of per-clip values.
    let m: f64 = rep.clips.iter().map(|c| c.lsd).sum::<f64>() / rep.clips.len() as f64;
    assert_eq!(m, rep.mean_lsd);
}

#[test]
fn report_serializes_and_is_deterministic() {
    let a = evaluate_pairs(&pairs(), SR, "p", "ck", None, None).unwrap();
    let b = evaluate_pairs(&pairs(), SR, "p", "ck", None, None).unwrap();
    let ja = serde_json::to_string_pretty(&a).unwrap();
    let jb = serde_json::to_string_pretty(&b).unwrap();
    assert_eq!(ja, jb, "report not byte-identical across runs");
    let table = a.text_table();
    let header = table.lines().next().unwrap();
    // Column order: L, N, S, P, ST.
    let cols: Vec<&str> = header.split_whitespace().collect();
    assert_eq!(cols, ["clip", "L", "N", "S", "P", "ST"]);
    assert!(table.contains("mean"));
}

#[cfg(unix)]
#[test]
fn external_adapters_present_and_absent() {
    use std::os::unix::fs::PermissionsExt;
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.sh");
    std::fs::write(&good, "#!/bin/sh\necho 3.25\n").unwrap();
    let bad = dir.path().join("bad.sh");
    std::fs::write(&bad, "#!/bin/sh\nexit 1\n").unwrap();
    for p in [&good, &bad] {
        std::fs::set_permissions(p, std::fs::Permissions::from_mode(0o755)).unwrap();
    }

    let rep = evaluate_pairs(
        &pairs(),
        SR,
        "p",
        "ck",
        Some(good.to_str().unwrap()),
        Some(bad.to_str().unwrap()),
    )
    .unwrap();
    assert_eq!(rep.mean_pesq, Some(3.25));
    assert!(rep.mean_nisqa.is_none());
    assert!(rep.absent.contains_key("nisqa"), "absent: {:?}", rep.absent);
    assert!(rep.clips.iter().all(|c| c.nisqa.is_none()));
    assert!(rep.text_table().contains("nisqa absent"));
}
