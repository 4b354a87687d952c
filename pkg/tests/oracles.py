"""Independent reference computations used as test oracles.

These intentionally avoid the package's code paths: plain loops, explicit
DFT sums and rank counting.
"""

import math

import numpy as np


def mse_loop(a, b):
    total = 0.0
    rows, cols = len(a), len(a[0])
    for i in range(rows):
        for j in range(cols):
            d = float(a[i][j]) - float(b[i][j])
            total += d * d
    return total / (rows * cols)


def periodic_hamming(n):
    return np.array([0.54 - 0.46 * math.cos(2 * math.pi * k / n) for k in range(n)])


def stft_magnitude_dft(x, n_fft=512, hop=256):
    """Centered, reflect-padded short-time DFT computed with an explicit DFT matrix."""
    x = np.asarray(x, dtype=np.float64)
    half = n_fft // 2
    left = x[1:half + 1][::-1]
    right = x[-half - 1:-1][::-1]
    padded = np.concatenate([left, x, right])
    window = periodic_hamming(n_fft)
    k = np.arange(half + 1)[:, None]
    n = np.arange(n_fft)[None, :]
    dft = np.exp(-2j * np.pi * k * n / n_fft)
    frames = []
    for start in range(0, len(padded) - n_fft + 1, hop):
        frames.append(np.abs(dft @ (padded[start:start + n_fft] * window)))
    return np.array(frames)


def average_ranks(xs):
    xs = list(xs)
    out = []
    for v in xs:
        less = sum(1 for u in xs if u < v)
        equal = sum(1 for u in xs if u == v)
        out.append(less + (equal + 1) / 2)
    return out


def pearson_formula(xs, ys):
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(xs, ys))
    vx = sum((a - mx) ** 2 for a in xs)
    vy = sum((b - my) ** 2 for b in ys)
    return cov / math.sqrt(vx * vy)


def si_sdr_direct(ref, est):
    ref = np.asarray(ref, float) - np.mean(ref)
    est = np.asarray(est, float) - np.mean(est)
    scale = sum(r * e for r, e in zip(ref, est)) / sum(r * r for r in ref)
    target = scale * ref
    noise = est - target
    return 10 * math.log10(sum(target ** 2) / sum(noise ** 2))
