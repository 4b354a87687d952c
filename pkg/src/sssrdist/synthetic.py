"""Seeded speech-like test material.

Real corpora are not needed for desk-scale checks: utterances here are
syllable-like bursts of gliding harmonic tones shaped by three random
formant bumps, separated by short pauses. Wideband PESQ accepts them.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .audio_io import PROCESSING_RATE, TimeSignal, save_audio


def speechlike(rng: np.random.Generator, duration: float = 2.0, sample_rate: int = PROCESSING_RATE,
               peak: float = 0.5) -> TimeSignal:
    n = int(duration * sample_rate)
    out = np.zeros(n)
    pos = int(min(0.15, 0.1 * duration) * sample_rate)
    tail = int(min(0.1, 0.05 * duration) * sample_rate)
    while pos < n - tail:
        length = min(int(rng.uniform(0.12, 0.3) * sample_rate), n - pos)
        t = np.arange(length) / sample_rate
        f0 = rng.uniform(100, 220) * (1 + 0.1 * np.sin(2 * np.pi * rng.uniform(2, 5) * t))
        phase = 2 * np.pi * np.cumsum(f0) / sample_rate
        formants = rng.uniform([300, 900, 2200], [800, 2000, 3000])
        seg = np.zeros(length)
        f_mean = f0.mean()
        for k in range(1, int(0.45 * sample_rate / f_mean)):
            fk = k * f_mean
            amp = np.exp(-0.5 * ((fk - formants) / 120.0) ** 2).sum() + 0.02
            seg += amp * np.sin(k * phase) / np.sqrt(k)
        out[pos:pos + length] += seg * np.hanning(length)
        pos += length + int(rng.uniform(0.03, 0.15) * sample_rate)
    return TimeSignal(peak * out / np.max(np.abs(out)), sample_rate)


def colored_noise(rng: np.random.Generator, n: int, tone_hz: float = 0.0, tone_level: float = 0.0) -> np.ndarray:
    """Low-pass tilted Gaussian noise with an optional stationary tone."""
    white = rng.standard_normal(n + 1)
    noise = white[1:] + 0.7 * white[:-1]
    if tone_hz:
        noise = noise + tone_level * np.sqrt(2) * np.sin(2 * np.pi * tone_hz * np.arange(n) / PROCESSING_RATE)
    return noise


def mix_at_snr(clean: np.ndarray, noise: np.ndarray, snr_db: float) -> np.ndarray:
    gain = np.sqrt(np.sum(clean ** 2) / (np.sum(noise ** 2) * 10 ** (snr_db / 10)))
    return clean + gain * noise


def synthetic_pairs(n_pairs: int, seed: int = 0, duration: float = 1.0,
                    snrs=(0.0, 5.0, 10.0, 15.0)):
    """Yield ``(id, clean, noisy, snr_db)`` tuples, SNRs cycling through ``snrs``."""
    rng = np.random.default_rng(seed)
    for i in range(n_pairs):
        clean = speechlike(rng, duration)
        noise = colored_noise(rng, len(clean), tone_hz=rng.uniform(300, 1500), tone_level=0.3)
        snr = float(snrs[i % len(snrs)])
        noisy = np.clip(mix_at_snr(clean.samples, noise, snr), -1.0, 1.0)
        speaker = f"s{i % 4:02d}"
        yield f"{speaker}_{i:03d}", clean, TimeSignal(noisy, clean.sample_rate), snr


def write_voicebank_fixture(root, n_pairs: int = 10, seed: int = 0, duration: float = 1.0,
                            split: str = "test") -> Path:
    """Write a VoiceBank-DEMAND-style tree: clean/, noisy/ and a noise log."""
    root = Path(root)
    lines = []
    for uid, clean, noisy, snr in synthetic_pairs(n_pairs, seed, duration):
        save_audio(root / "clean" / f"{uid}.wav", clean)
        save_audio(root / "noisy" / f"{uid}.wav", noisy)
        lines.append(f"{uid} synthetic {snr}")
    (root / f"log_{split}set.txt").write_text("\n".join(lines) + "\n")
    return root


def write_nisqa_fixture(root, n_pairs: int = 6, seed: int = 0, duration: float = 1.0, db: str = "NISQA_TEST_SYN") -> Path:
    """Write a NISQA-style database directory with deg/, ref/ and a label file.

    MOS labels are a deterministic decreasing function of the noise level.
    """
    base = Path(root) / db
    rows = []
    for uid, clean, noisy, snr in synthetic_pairs(n_pairs, seed, duration):
        save_audio(base / "ref" / f"{uid}.wav", clean)
        save_audio(base / "deg" / f"{uid}.wav", noisy)
        mos = round(1.0 + 4.0 * snr / 15.0 * 0.9, 3)
        rows.append({"db": db, "filepath_deg": f"deg/{uid}.wav", "filepath_ref": f"ref/{uid}.wav", "mos": mos})
    with open(base / f"{db}_file.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["db", "filepath_deg", "filepath_ref", "mos"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return Path(root)
