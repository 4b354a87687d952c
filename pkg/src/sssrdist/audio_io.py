"""Audio loading, resampling, pairing and corpus manifests."""

from __future__ import annotations

import csv
import os
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

PROCESSING_RATE = 16000
# Longest clean/noisy length difference tolerated before pairs are considered misaligned.
MAX_PAIR_MISMATCH_S = 0.1
LAYOUTS = ("voicebank", "nisqa")
SPLITS = ("train", "valid", "test")
MANIFEST_COLUMNS = ["id", "clean_path", "noisy_path", "snr_db", "noise_label", "mos"]


class AudioError(ValueError):
    pass


class ManifestError(ValueError):
    pass


@dataclass
class TimeSignal:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise AudioError(f"expected mono samples, got shape {self.samples.shape}")
        if int(self.sample_rate) <= 0:
            raise AudioError(f"sample rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)
        if not np.all(np.isfinite(self.samples)):
            raise AudioError("signal contains non-finite samples")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass
class UtterancePair:
    id: str
    clean: TimeSignal
    noisy: TimeSignal
    snr_db: Optional[float] = None
    noise_label: Optional[str] = None
    mos: Optional[float] = None

    def __post_init__(self):
        if self.clean.sample_rate != self.noisy.sample_rate:
            raise AudioError(f"{self.id}: clean and noisy sample rates differ")
        if len(self.clean) != len(self.noisy):
            raise AudioError(f"{self.id}: clean and noisy lengths differ")
        if self.mos is not None and not 1.0 <= self.mos <= 5.0:
            raise AudioError(f"{self.id}: MOS {self.mos} outside [1, 5]")


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    clean_path: str
    noisy_path: str
    snr_db: Optional[float] = None
    noise_label: Optional[str] = None
    mos: Optional[float] = None


@dataclass
class DatasetManifest:
    name: str
    split: str
    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ManifestError(f"unknown split {self.split!r}")
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ManifestError("duplicate entry ids in manifest")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def load_audio(path) -> TimeSignal:
    """Read a PCM or float WAV file as mono float samples in [-1, 1].

    Multi-channel files are averaged down to mono.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such audio file: {path}")
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise AudioError(f"unsupported or corrupt WAV file {path}: {exc}") from exc
    samples = _pcm_to_float(data)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if samples.size == 0:
        raise AudioError(f"zero-length audio: {path}")
    return TimeSignal(samples, rate)


def _pcm_to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        return data.astype(np.float64) / 2147483648.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise AudioError(f"unsupported sample format {data.dtype}")


def save_audio(path, sig: TimeSignal) -> None:
    """Write a 32-bit float WAV."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(path, sig.sample_rate, sig.samples.astype(np.float32))


def resample(sig: TimeSignal, target_rate: int) -> TimeSignal:
    """Band-limited polyphase resampling.

    Uses scipy's ``resample_poly`` with its default Kaiser window (beta 5.0),
    whose FIR length is ``20 * max(up, down) + 1`` taps for the reduced ratio
    ``up/down``. The output is trimmed or zero-padded to
    ``round(len * target_rate / sample_rate)`` samples.
    """
    target_rate = int(target_rate)
    if target_rate <= 0:
        raise AudioError(f"target rate must be positive, got {target_rate}")
    if target_rate == sig.sample_rate:
        return TimeSignal(sig.samples.copy(), target_rate)
    ratio = Fraction(target_rate, sig.sample_rate)
    out = resample_poly(sig.samples, ratio.numerator, ratio.denominator)
    n_out = int(round(len(sig) * target_rate / sig.sample_rate))
    if out.shape[0] >= n_out:
        out = out[:n_out]
    else:
        out = np.pad(out, (0, n_out - out.shape[0]))
    return TimeSignal(out, target_rate)


def align_pair(clean: TimeSignal, noisy: TimeSignal, max_mismatch_s: float = MAX_PAIR_MISMATCH_S):
    """Truncate a clean/noisy pair to a common length.

    Raises if the lengths differ by more than ``max_mismatch_s`` seconds.
    """
    if clean.sample_rate != noisy.sample_rate:
        raise AudioError("cannot align signals with different sample rates")
    diff = abs(len(clean) - len(noisy))
    if diff > max_mismatch_s * clean.sample_rate:
        raise AudioError(
            f"clean/noisy length mismatch of {diff} samples exceeds {max_mismatch_s} s"
        )
    n = min(len(clean), len(noisy))
    return TimeSignal(clean.samples[:n], clean.sample_rate), TimeSignal(noisy.samples[:n], noisy.sample_rate)


def load_pair(entry: ManifestEntry, target_rate: int = PROCESSING_RATE) -> UtterancePair:
    """Load, resample and length-align one manifest entry."""
    clean = resample(load_audio(entry.clean_path), target_rate)
    noisy = resample(load_audio(entry.noisy_path), target_rate)
    clean, noisy = align_pair(clean, noisy)
    return UtterancePair(entry.id, clean, noisy, entry.snr_db, entry.noise_label, entry.mos)


# --- manifests -------------------------------------------------------------

def build_manifest(root, layout: str, split: str) -> DatasetManifest:
    """Scan a corpus directory and pair clean/noisy files.

    ``voicebank`` layout: ``root`` holds a clean and a noisy directory, either
    named ``clean``/``noisy`` or following the distribution names
    ``clean_<split>set*``/``noisy_<split>set*``. Files are paired by identical
    name. An optional ``log_<split>set*.txt`` anywhere under ``root`` with
    lines ``<id> <noise_label> <snr_db>`` fills the noise metadata.

    ``nisqa`` layout: every ``*_file.csv`` label file under ``root`` is read;
    rows give the degraded and reference file paths (``filepath_deg``/
    ``filepath_ref``, relative to the label file's directory) and ``mos``.
    """
    root = Path(root)
    if layout not in LAYOUTS:
        raise ManifestError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")
    if split not in SPLITS:
        raise ManifestError(f"unknown split {split!r}")
    if not root.is_dir():
        raise FileNotFoundError(f"corpus root not found: {root}")
    if layout == "voicebank":
        entries = _scan_voicebank(root, split)
    else:
        entries = _scan_nisqa(root)
    if not entries:
        raise ManifestError(f"empty result set under {root}")
    return DatasetManifest(name=f"{layout}:{root.name}", split=split, entries=entries)


def _find_subdir(root: Path, kind: str, split: str) -> Optional[Path]:
    plain = root / kind
    if plain.is_dir():
        return plain
    pattern = re.compile(rf"^{kind}_{split}set.*$")
    hits = sorted(p for p in root.iterdir() if p.is_dir() and pattern.match(p.name))
    return hits[0] if hits else None


def _read_voicebank_log(root: Path, split: str) -> dict:
    meta = {}
    for log in sorted(root.rglob(f"log_{split}set*.txt")):
        for line in log.read_text().splitlines():
            parts = line.split()
            if len(parts) >= 3:
                try:
                    meta[parts[0]] = (parts[1], float(parts[2]))
                except ValueError:
                    continue
    return meta


def _scan_voicebank(root: Path, split: str) -> list[ManifestEntry]:
    clean_dir = _find_subdir(root, "clean", split)
    noisy_dir = _find_subdir(root, "noisy", split)
    if clean_dir is None or noisy_dir is None:
        return []
    meta = _read_voicebank_log(root, split)
    entries = []
    for clean_path in sorted(clean_dir.glob("*.wav")):
        noisy_path = noisy_dir / clean_path.name
        if not noisy_path.is_file():
            continue
        uid = clean_path.stem
        label, snr = meta.get(uid, (None, None))
        entries.append(ManifestEntry(uid, str(clean_path), str(noisy_path), snr, label))
    return entries


def _scan_nisqa(root: Path) -> list[ManifestEntry]:
    label_files = sorted(root.rglob("*_file.csv"))
    if not label_files:
        raise ManifestError(f"no NISQA label file (*_file.csv) under {root}")
    entries = []
    for label_file in label_files:
        base = label_file.parent
        with open(label_file, newline="") as fh:
            for row in csv.DictReader(fh):
                deg = row.get("filepath_deg") or os.path.join("deg", row["filename_deg"])
                ref = row.get("filepath_ref") or os.path.join("ref", row["filename_ref"])
                deg_path, ref_path = base / deg, base / ref
                if not (deg_path.is_file() and ref_path.is_file()):
                    raise ManifestError(f"{label_file}: missing audio for row {deg}")
                db = row.get("db") or base.name
                uid = f"{db}/{Path(deg).stem}"
                entries.append(ManifestEntry(uid, str(ref_path), str(deg_path), mos=float(row["mos"])))
    return entries


def _opt_float(text: str) -> Optional[float]:
    return float(text) if text not in ("", None) else None


def write_manifest_csv(manifest: DatasetManifest, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for e in manifest.entries:
            writer.writerow([e.id, e.clean_path, e.noisy_path, _fmt(e.snr_db), e.noise_label or "", _fmt(e.mos)])


def read_manifest_csv(path, name: Optional[str] = None, split: str = "test") -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    entries = [
        ManifestEntry(
            r["id"], r["clean_path"], r["noisy_path"],
            _opt_float(r.get("snr_db", "")), r.get("noise_label") or None, _opt_float(r.get("mos", "")),
        )
        for r in rows
    ]
    return DatasetManifest(name or path.stem, split, entries)


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


def speaker_of(utterance_id: str) -> str:
    return utterance_id.split("_", 1)[0]


def holdout_speakers(manifest: DatasetManifest, n_speakers: int = 2, seed: int = 0):
    """Split a training manifest by speaker into (train, valid) manifests."""
    speakers = sorted({speaker_of(e.id) for e in manifest.entries})
    if len(speakers) <= n_speakers:
        raise ManifestError(f"need more than {n_speakers} speakers to hold out, found {len(speakers)}")
    rng = np.random.default_rng(seed)
    held = set(rng.choice(speakers, size=n_speakers, replace=False).tolist())
    train = [e for e in manifest.entries if speaker_of(e.id) not in held]
    valid = [e for e in manifest.entries if speaker_of(e.id) in held]
    return (
        DatasetManifest(manifest.name, "train", train),
        DatasetManifest(manifest.name, "valid", valid),
    )


def subset(manifest: DatasetManifest, ids: Iterable[str]) -> DatasetManifest:
    keep = set(ids)
    return DatasetManifest(manifest.name, manifest.split, [e for e in manifest.entries if e.id in keep])
