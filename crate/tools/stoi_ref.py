#!/usr/bin/env python3
"""Independent STOI reference used to freeze oracle values in the test suite.

Implements the standard short-time objective intelligibility measure
(10 kHz analysis, 256/128 framing, 512-point FFT, 15 one-third-octave bands
from 150 Hz, 30-frame segments, -15 dB clipping, 40 dB silent-frame range)
directly from its published definition, on top of numpy/scipy.
"""
import numpy as np
from scipy.signal import resample_poly

FS = 10000
FRAME = 256
HOP = 128
NFFT = 512
BANDS = 15
MINFREQ = 150.0
SEG = 30
BETA = -15.0
DYN = 40.0
EPS = 1e-15


def window():
    return np.hanning(FRAME + 2)[1:-1]


def frames(x):
    n = (len(x) - FRAME) // HOP + 1 if len(x) >= FRAME else 0
    return np.stack([x[i * HOP:i * HOP + FRAME] for i in range(n)]) if n else np.zeros((0, FRAME))


def remove_silent(x, y):
    w = window()
    xf, yf = frames(x) * w, frames(y) * w
    e = 20 * np.log10(np.linalg.norm(xf, axis=1) + EPS)
    keep = np.where(e > e.max() - DYN)[0]
    n = (len(keep) - 1) * HOP + FRAME if len(keep) else 0
    xs, ys = np.zeros(n), np.zeros(n)
    for j, i in enumerate(keep):
        xs[j * HOP:j * HOP + FRAME] += xf[i]
        ys[j * HOP:j * HOP + FRAME] += yf[i]
    return xs, ys


def third_oct(x):
    w = window()
    xf = frames(x) * w
    spec = np.abs(np.fft.rfft(xf, NFFT)) ** 2
    f = np.arange(NFFT // 2 + 1) * FS / NFFT
    out = np.zeros((BANDS, len(xf)))
    for k in range(BANDS):
        cf = MINFREQ * 2 ** (k / 3)
        lo = np.argmin(np.abs(f - cf * 2 ** (-1 / 6)))
        hi = np.argmin(np.abs(f - cf * 2 ** (1 / 6)))
        out[k] = np.sqrt(spec[:, lo:hi].sum(axis=1))
    return out


def stoi(ref, est, fs):
    if fs != FS:
        ref = resample_poly(ref, FS, fs)
        est = resample_poly(est, FS, fs)
    x, y = remove_silent(ref, est)
    xb, yb = third_oct(x), third_oct(y)
    nfr = xb.shape[1]
    assert nfr >= SEG
    clip = 10 ** (-BETA / 20)
    vals = []
    for m in range(SEG - 1, nfr):
        xs = xb[:, m + 1 - SEG:m + 1]
        ys = yb[:, m + 1 - SEG:m + 1]
        alpha = np.linalg.norm(xs, axis=1, keepdims=True) / (np.linalg.norm(ys, axis=1, keepdims=True) + EPS)
        yp = np.minimum(alpha * ys, xs * (1 + clip))
        xs = xs - xs.mean(axis=1, keepdims=True)
        yp = yp - yp.mean(axis=1, keepdims=True)
        d = (xs * yp).sum(axis=1) / (np.linalg.norm(xs, axis=1) * np.linalg.norm(yp, axis=1) + EPS)
        vals.extend(d)
    return float(np.mean(vals))


def hash_noise(n, salt=0.0):
    i = np.arange(n, dtype=np.float64)
    return np.modf(np.sin(i * 12.9898 + salt) * 43758.5453123)[0] * 2 - 1


def pseudo_speech(n, fs=8000, voice=0.0):
    """Deterministic speech-like test signal: hash-varied syllables with two
    formants, occasional fricative hiss, and raised-cosine onsets."""
    def h(k, salt):
        return np.modf(np.sin(k * 12.9898 + salt * 78.233 + voice * 37.719) * 43758.5453123)[0]

    t = np.arange(n) / fs
    syl = np.floor(t * 3.5).astype(int)
    f0 = 110 + 50 * h(syl, 1.0) + 15 * np.sin(2 * np.pi * 5.0 * t)
    phase = 2 * np.pi * np.cumsum(f0) / fs
    f1 = 350 + 600 * h(syl, 2.0)
    f2 = 1200 + 1400 * h(syl, 3.0)
    x = np.zeros(n)
    for k in range(1, 30):
        fk = k * np.maximum(f0, 90)
        a = np.exp(-((fk - f1) / 180) ** 2) + 0.6 * np.exp(-((fk - f2) / 300) ** 2) + 0.03
        x += a * np.sin(k * phase)
    hiss = hash_noise(n, 7.0 + voice)
    hp = hiss - np.concatenate([[0], hiss[:-1]])
    fric = (h(syl, 4.0) > 0.65).astype(float)
    amp = 0.35 + 0.65 * h(syl, 5.0)
    ph_s = (t * 3.5) % 1.0
    edge = np.clip(np.minimum(ph_s, 1 - ph_s) * 8, 0, 1)
    env = amp * (0.25 + 0.75 * edge)
    return (x * (1 - 0.8 * fric) + 2.5 * hp * fric) * env


if __name__ == "__main__":
    n = 4 * 8000
    sp = pseudo_speech(n)
    noise = hash_noise(n)
    print("stoi(x,x)        = %.12f" % stoi(sp, sp, 8000))
    print("stoi(x,noise)    = %.12f" % stoi(sp, noise * np.sqrt((sp ** 2).mean() / (noise ** 2).mean()), 8000))
    for snr in (-10, 0, 10, 20):
        scale = np.sqrt((sp ** 2).mean() / ((noise ** 2).mean() * 10 ** (snr / 10)))
        print("stoi snr %+d     = %.12f" % (snr, stoi(sp, sp + scale * noise, 8000)))
