"""Evaluation metrics: SI-SDR, plus adapters to external PESQ/STOI/Composite
implementations.

Adapters are registered by name and report the package that backs them and
its version. Unavailable adapters produce ``None`` (never a silent zero) and
log a warning once.
"""

from __future__ import annotations

import csv
import importlib
import importlib.metadata
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .audio_io import PROCESSING_RATE, TimeSignal

log = logging.getLogger(__name__)

SI_SDR_CEILING_DB = 60.0
EVAL_COLUMNS = ["pesq", "stoi", "csig", "cbak", "covl", "si_sdr"]


class MetricError(ValueError):
    pass


def si_sdr(ref: TimeSignal | np.ndarray, est: TimeSignal | np.ndarray,
           ceiling: float = SI_SDR_CEILING_DB) -> float:
    """Scale-invariant SDR in dB.

    Both signals are made zero-mean, ``est`` is projected onto ``ref`` and the
    ratio of projected to residual energy is returned, capped at ``ceiling``.
    A zero estimate gives ``-inf``.
    """
    ref = np.asarray(getattr(ref, "samples", ref), dtype=np.float64)
    est = np.asarray(getattr(est, "samples", est), dtype=np.float64)
    if ref.shape != est.shape:
        raise MetricError(f"length mismatch: {ref.shape} vs {est.shape}")
    ref = ref - ref.mean()
    est = est - est.mean()
    ref_energy = np.dot(ref, ref)
    if ref_energy == 0:
        raise MetricError("reference signal is all zero")
    if not np.any(est):
        return -math.inf
    target = (np.dot(est, ref) / ref_energy) * ref
    residual = est - target
    res_energy = np.dot(residual, residual)
    target_energy = np.dot(target, target)
    if res_energy == 0 or target_energy / res_energy >= 10 ** (ceiling / 10):
        return float(ceiling)
    if target_energy == 0:
        return -math.inf
    return float(10 * np.log10(target_energy / res_energy))


# --- external evaluator adapters -------------------------------------------

@dataclass
class MetricAdapter:
    name: str
    package: str
    fn: Callable  # (ref ndarray, est ndarray, sample_rate) -> float | dict
    outputs: tuple

    @property
    def version(self) -> Optional[str]:
        try:
            return importlib.metadata.version(self.package)
        except importlib.metadata.PackageNotFoundError:
            return None

    def available(self) -> bool:
        try:
            importlib.import_module(self.package)
        except Exception:
            return False
        return True


def _pesq_wb(ref, est, rate):
    from pesq import pesq

    return float(pesq(rate, ref, est, "wb"))


def _stoi(ref, est, rate):
    from pystoi import stoi

    return float(stoi(ref, est, rate, extended=False))


def _composite(ref, est, rate):
    import pysepm

    csig, cbak, covl = pysepm.composite(ref, est, rate)
    return {"csig": float(csig), "cbak": float(cbak), "covl": float(covl)}


_REGISTRY: dict[str, MetricAdapter] = {}
_warned: set = set()


def register_adapter(adapter: MetricAdapter) -> None:
    _REGISTRY[adapter.name] = adapter


def get_adapter(name: str) -> MetricAdapter:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise MetricError(f"no metric adapter named {name!r}") from None


register_adapter(MetricAdapter("pesq", "pesq", _pesq_wb, ("pesq",)))
register_adapter(MetricAdapter("stoi", "pystoi", _stoi, ("stoi",)))
register_adapter(MetricAdapter("composite", "pysepm", _composite, ("csig", "cbak", "covl")))


def adapter_versions() -> dict:
    return {
        name: {"package": a.package, "version": a.version, "available": a.available()}
        for name, a in sorted(_REGISTRY.items())
    }


def _run_adapter(name: str, ref, est):
    adapter = get_adapter(name)
    if not adapter.available():
        if name not in _warned:
            log.warning("metric adapter %r unavailable (package %r not installed)", name, adapter.package)
            _warned.add(name)
        return None
    ref = np.asarray(getattr(ref, "samples", ref), dtype=np.float64)
    est = np.asarray(getattr(est, "samples", est), dtype=np.float64)
    if ref.shape != est.shape:
        raise MetricError(f"length mismatch: {ref.shape} vs {est.shape}")
    try:
        value = adapter.fn(ref, est, PROCESSING_RATE)
    except Exception as exc:  # evaluators raise their own error types
        log.warning("metric %s failed: %s", name, exc)
        return None
    if isinstance(value, dict):
        return {k: (v if math.isfinite(v) else None) for k, v in value.items()}
    return value if math.isfinite(value) else None


def pesq_score(ref, est) -> Optional[float]:
    """Wideband PESQ at 16 kHz, or ``None`` when unavailable."""
    return _run_adapter("pesq", ref, est)


def stoi_score(ref, est) -> Optional[float]:
    return _run_adapter("stoi", ref, est)


def composite_scores(ref, est) -> dict:
    out = _run_adapter("composite", ref, est)
    return out if out is not None else {"csig": None, "cbak": None, "covl": None}


@dataclass
class EvaluationRow:
    utterance_id: str
    pesq: Optional[float] = None
    stoi: Optional[float] = None
    csig: Optional[float] = None
    cbak: Optional[float] = None
    covl: Optional[float] = None
    si_sdr: Optional[float] = None

    def values(self) -> dict:
        d = asdict(self)
        d.pop("utterance_id")
        return d


def evaluate_utterance(ref: TimeSignal, est: TimeSignal, utterance_id: str = "",
                       metrics: Sequence[str] = ("pesq", "stoi", "composite", "si_sdr")) -> EvaluationRow:
    for sig in (ref, est):
        if getattr(sig, "sample_rate", PROCESSING_RATE) != PROCESSING_RATE:
            raise MetricError(f"metrics expect {PROCESSING_RATE} Hz signals")
    row = EvaluationRow(utterance_id)
    if "pesq" in metrics:
        row.pesq = pesq_score(ref, est)
    if "stoi" in metrics:
        row.stoi = stoi_score(ref, est)
    if "composite" in metrics:
        for key, value in composite_scores(ref, est).items():
            setattr(row, key, value)
    if "si_sdr" in metrics:
        try:
            value = si_sdr(ref, est)
            row.si_sdr = value if math.isfinite(value) else None
        except MetricError as exc:
            log.warning("si_sdr failed for %s: %s", utterance_id, exc)
    return row


def mean_row(rows: Sequence[EvaluationRow]) -> dict:
    """Per-metric mean over rows where the metric is present."""
    out = {}
    for col in EVAL_COLUMNS:
        vals = [getattr(r, col) for r in rows if getattr(r, col) is not None]
        out[col] = float(np.mean(vals)) if vals else None
    return out


def write_evaluation_csv(rows: Sequence[EvaluationRow], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["utterance_id"] + EVAL_COLUMNS)
        for r in rows:
            writer.writerow([r.utterance_id] + ["" if getattr(r, c) is None else repr(getattr(r, c)) for c in EVAL_COLUMNS])


def read_metric_csv(path) -> dict:
    """``utterance_id -> {column: float}`` from any CSV with an id column."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    id_col = "utterance_id" if "utterance_id" in rows[0] else "id"
    out = {}
    for row in rows:
        vals = {}
        for key, text in row.items():
            if key == id_col or text in ("", None):
                continue
            try:
                vals[key] = float(text)
            except ValueError:
                continue
        out[row[id_col]] = vals
    return out
