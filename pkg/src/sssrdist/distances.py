"""MSE distances between clean and degraded representations."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .audio_io import DatasetManifest, ManifestEntry, TimeSignal, load_pair
from .representations import DEFAULT_STFT, SSSRBackend, StftParams, extract, stft

log = logging.getLogger(__name__)

# Representations whose frame counts differ by more than this are not compared.
MAX_FRAME_MISMATCH = 2
DISTANCE_COLUMNS = ["d_sg", "d_fe_hubert", "d_ol_hubert", "d_fe_xlsr", "d_ol_xlsr"]


class DistanceError(ValueError):
    pass


@dataclass
class DistanceRecord:
    utterance_id: str
    d_sg: Optional[float] = None
    d_fe: dict = field(default_factory=dict)
    d_ol: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    mos: Optional[float] = None
    snr_db: Optional[float] = None
    error: Optional[str] = None

    def as_flat(self) -> dict:
        """Column name -> value, with absent values as ``None``."""
        flat = {"d_sg": self.d_sg}
        for model_id, value in self.d_fe.items():
            flat[f"d_fe_{model_id}"] = value
        for model_id, value in self.d_ol.items():
            flat[f"d_ol_{model_id}"] = value
        flat.update(self.metrics)
        flat["mos"] = self.mos
        flat["snr_db"] = self.snr_db
        return flat

    def get(self, name: str) -> Optional[float]:
        return self.as_flat().get(name)


def mse_distance(a: np.ndarray, b: np.ndarray, reduction: str = "mean") -> float:
    """Squared-error distance between two equal-shape matrices.

    ``reduction="mean"`` averages over all T*F elements; ``"sum"`` returns the
    raw sum of squared differences.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DistanceError(f"shape mismatch: {a.shape} vs {b.shape}")
    sq = np.square(a - b)
    if reduction == "mean":
        return float(sq.mean())
    if reduction == "sum":
        return float(sq.sum())
    raise DistanceError(f"unknown reduction {reduction!r}")


def _check_pair(s: TimeSignal, x: TimeSignal):
    if len(s) != len(x):
        raise DistanceError(f"signals differ in length ({len(s)} vs {len(x)})")
    if s.sample_rate != x.sample_rate:
        raise DistanceError("signals differ in sample rate")


def spectrogram_distance(s: TimeSignal, x: TimeSignal, params: StftParams = DEFAULT_STFT,
                         reduction: str = "mean") -> float:
    _check_pair(s, x)
    return mse_distance(stft(s, params).magnitude, stft(x, params).magnitude, reduction)


def truncate_frames(a: np.ndarray, b: np.ndarray):
    if abs(a.shape[0] - b.shape[0]) > MAX_FRAME_MISMATCH:
        raise DistanceError(f"frame counts differ by more than {MAX_FRAME_MISMATCH}: {a.shape[0]} vs {b.shape[0]}")
    t = min(a.shape[0], b.shape[0])
    return a[:t], b[:t]


def representation_distance(backend: SSSRBackend, layer: str, s: TimeSignal, x: TimeSignal,
                            reduction: str = "mean") -> float:
    _check_pair(s, x)
    a, b = truncate_frames(extract(backend, layer, s).values, extract(backend, layer, x).values)
    return mse_distance(a, b, reduction)


def pair_distances(uid: str, s: TimeSignal, x: TimeSignal, backends: Sequence[SSSRBackend],
                   layers: Sequence[str], params: StftParams = DEFAULT_STFT,
                   reduction: str = "mean") -> DistanceRecord:
    record = DistanceRecord(uid)
    record.d_sg = spectrogram_distance(s, x, params, reduction)
    for backend in backends:
        for layer in layers:
            value = representation_distance(backend, layer, s, x, reduction)
            target = record.d_fe if layer == "FE" else record.d_ol
            target[backend.model_id] = value
    return record


def batch_distances(manifest: DatasetManifest, backends: Sequence[SSSRBackend] = (),
                    layers: Sequence[str] = ("FE", "OL"), params: StftParams = DEFAULT_STFT,
                    reduction: str = "mean", workers: int = 1) -> list[DistanceRecord]:
    """One DistanceRecord per manifest entry, ordered by id.

    A failing utterance yields a record carrying its error message instead of
    aborting the batch.
    """
    if len(manifest) == 0:
        raise DistanceError("empty manifest")

    def work(entry: ManifestEntry) -> DistanceRecord:
        try:
            pair = load_pair(entry)
            record = pair_distances(entry.id, pair.clean, pair.noisy, backends, layers, params, reduction)
        except Exception as exc:  # per-utterance failures are recorded, not raised
            log.warning("distance computation failed for %s: %s", entry.id, exc)
            record = DistanceRecord(entry.id, error=f"{type(exc).__name__}: {exc}")
        record.mos = entry.mos
        record.snr_db = entry.snr_db
        return record

    entries = sorted(manifest.entries, key=lambda e: e.id)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(work, entries))
    return [work(e) for e in entries]


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


def record_columns(records: Sequence[DistanceRecord]) -> list[str]:
    cols = [c for c in DISTANCE_COLUMNS]
    extra = []
    for r in records:
        for key in r.as_flat():
            if key not in cols and key not in extra and key not in ("mos", "snr_db"):
                extra.append(key)
    return cols + sorted(extra) + ["mos", "snr_db"]


def write_records_csv(records: Sequence[DistanceRecord], path) -> None:
    """CSV with fixed distance columns, then metric columns, then mos/snr_db/error."""
    cols = record_columns(records)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["utterance_id"] + cols + ["error"])
        for r in records:
            flat = r.as_flat()
            writer.writerow([r.utterance_id] + [_fmt(flat.get(c)) for c in cols] + [r.error or ""])


def read_records_csv(path) -> list[DistanceRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    records = []
    for row in rows:
        rec = DistanceRecord(row["utterance_id"], error=row.get("error") or None)
        for key, text in row.items():
            if key in ("utterance_id", "error") or text in ("", None):
                continue
            value = float(text)
            if key == "d_sg":
                rec.d_sg = value
            elif key.startswith("d_fe_"):
                rec.d_fe[key[5:]] = value
            elif key.startswith("d_ol_"):
                rec.d_ol[key[5:]] = value
            elif key == "mos":
                rec.mos = value
            elif key == "snr_db":
                rec.snr_db = value
            else:
                rec.metrics[key] = value
        records.append(rec)
    return records


def merge_metrics(records: Sequence[DistanceRecord], metric_rows: dict) -> list[DistanceRecord]:
    """Attach per-utterance metric values (``id -> {name: value}``) to records."""
    for r in records:
        for name, value in metric_rows.get(r.utterance_id, {}).items():
            if value is not None:
                r.metrics[name] = value
    return list(records)
