"""Spearman / Pearson correlation between distances and quality targets."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

MIN_POINTS = 3


class CorrelationError(ValueError):
    pass


def pearson(xs: Sequence[float], ys: Sequence[float]) -> Optional[float]:
    """Product-moment correlation; ``None`` when undefined (n < 3 or zero variance)."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape:
        raise CorrelationError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < MIN_POINTS:
        return None
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        return None
    r = np.dot(dx, dy) / (math.sqrt(sxx) * math.sqrt(syy))
    return float(min(1.0, max(-1.0, r)))


def rank(xs: Sequence[float]) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    x = np.asarray(xs, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size, dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> Optional[float]:
    return pearson(rank(xs), rank(ys))


@dataclass
class CorrelationCell:
    spearman: Optional[float]
    pearson: Optional[float]
    n: int


@dataclass
class CorrelationReport:
    rows: list
    columns: list
    cells: dict = field(default_factory=dict)  # (row, column) -> CorrelationCell

    def cell(self, row: str, column: str) -> CorrelationCell:
        return self.cells[(row, column)]


def _value(record, name):
    if hasattr(record, "get"):
        return record.get(name)
    return getattr(record, name, None)


def paired_values(records, x_name: str, y_name: str, with_ids: bool = False):
    ids, xs, ys = [], [], []
    for r in records:
        x, y = _value(r, x_name), _value(r, y_name)
        if x is None or y is None or not (math.isfinite(x) and math.isfinite(y)):
            continue
        ids.append(getattr(r, "utterance_id", ""))
        xs.append(x)
        ys.append(y)
    return (ids, xs, ys) if with_ids else (xs, ys)


def correlation_report(records, distances: Sequence[str], targets: Sequence[str]) -> CorrelationReport:
    """Correlate every distance with every target, dropping absent values pairwise.

    Records are sorted by utterance id first so that the result does not
    depend on input order.
    """
    records = sorted(records, key=lambda r: getattr(r, "utterance_id", ""))
    report = CorrelationReport(list(distances), list(targets))
    for d in distances:
        for t in targets:
            xs, ys = paired_values(records, d, t)
            report.cells[(d, t)] = CorrelationCell(spearman(xs, ys), pearson(xs, ys), len(xs))
    return report


def _fmt(v) -> str:
    return "" if v is None else f"{v:.6f}"


def write_report_csv(report: CorrelationReport, path) -> tuple[Path, Path]:
    """Write the correlation grid and a matching sample-count grid.

    The grid has one row per distance and two columns per target,
    ``<target>_spearman`` and ``<target>_pearson``. The counts go to a sibling
    file with suffix ``_n.csv``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_path = path.with_name(path.stem + "_n.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["distance"] + [f"{t}_{m}" for t in report.columns for m in ("spearman", "pearson")])
        for d in report.rows:
            cells = [report.cell(d, t) for t in report.columns]
            w.writerow([d] + [x for c in cells for x in (_fmt(c.spearman), _fmt(c.pearson))])
    with open(n_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["distance"] + list(report.columns))
        for d in report.rows:
            w.writerow([d] + [report.cell(d, t).n for t in report.columns])
    return path, n_path


def export_scatter(records, distance_name: str, metric_name: str, path) -> tuple[Path, Path]:
    """Scatter plot (PNG) of metric against distance plus the point CSV."""
    ids, xs, ys = paired_values(records, distance_name, metric_name, with_ids=True)
    if not xs:
        raise CorrelationError(f"no records with both {distance_name} and {metric_name}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    png, csv_path = path.with_suffix(".png"), path.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["utterance_id", distance_name, metric_name])
        for uid, x, y in zip(ids, xs, ys):
            w.writerow([uid, repr(x), repr(y)])

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 3.2))
    ax.scatter(xs, ys, s=6, alpha=0.6)
    ax.set_xlabel(distance_name)
    ax.set_ylabel(metric_name)
    short = lambda v: "n/a" if v is None else f"{v:.2f}"
    ax.set_title(f"Spearman {short(spearman(xs, ys))}, Pearson {short(pearson(xs, ys))}", fontsize=9)
    fig.tight_layout()
    fig.savefig(png, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return png, csv_path
