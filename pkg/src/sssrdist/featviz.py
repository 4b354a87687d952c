"""Spectrogram and channel-sorted representation panels."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .audio_io import TimeSignal
from .representations import SSSRBackend, extract_fe, stft


@dataclass
class SortedRepresentation:
    values: np.ndarray  # T x F, columns reordered
    permutation: np.ndarray  # output column j holds input channel permutation[j]


def greedy_channel_order(values: np.ndarray) -> np.ndarray:
    """Nearest-neighbour chaining of channels (columns) by Euclidean distance.

    Starts from the channel with the largest L2 norm and repeatedly appends
    the closest unvisited channel to the last one placed. Ties resolve to the
    lowest channel index.
    """
    cols = np.asarray(values, dtype=np.float64).T
    n = cols.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int)
    sq_norm = np.einsum("ij,ij->i", cols, cols)
    # pairwise squared distances via the Gram matrix, clipped against round-off
    dist = np.maximum(sq_norm[:, None] + sq_norm[None, :] - 2 * cols @ cols.T, 0.0)
    visited = np.zeros(n, dtype=bool)
    order = [int(np.argmax(sq_norm))]
    visited[order[0]] = True
    for _ in range(n - 1):
        d = np.where(visited, np.inf, dist[order[-1]])
        nxt = int(np.argmin(d))
        order.append(nxt)
        visited[nxt] = True
    return np.asarray(order, dtype=int)


def sort_channels(rep, permutation=None) -> SortedRepresentation:
    values = np.asarray(getattr(rep, "values", rep), dtype=np.float64)
    perm = greedy_channel_order(values) if permutation is None else np.asarray(permutation, dtype=int)
    return SortedRepresentation(values[:, perm], perm)


def standardized_sigmoid(values: np.ndarray) -> np.ndarray:
    """Per-panel z-score followed by an elementwise logistic function."""
    values = np.asarray(values, dtype=np.float64)
    std = values.std()
    z = (values - values.mean()) / std if std > 0 else np.zeros_like(values)
    return 1.0 / (1.0 + np.exp(-z))


def panel_data(s: TimeSignal, x: TimeSignal, backends: Sequence[SSSRBackend] = ()):
    """Ordered (title, T x F matrix) panels before display scaling.

    Spectrogram panels are log magnitudes. For each backend, the clean FE
    representation fixes the channel order and the noisy one reuses it, so
    the two panels stay comparable row by row.
    """
    panels = [
        ("clean spectrogram", np.log(stft(s).magnitude + 1e-8)),
        ("noisy spectrogram", np.log(stft(x).magnitude + 1e-8)),
    ]
    perms = {}
    for backend in backends:
        clean = sort_channels(extract_fe(backend, s))
        noisy = sort_channels(extract_fe(backend, x), clean.permutation)
        perms[backend.model_id] = clean.permutation
        panels.append((f"clean {backend.model_id} FE", clean.values))
        panels.append((f"noisy {backend.model_id} FE", noisy.values))
    return panels, perms


def render_panels(s: TimeSignal, x: TimeSignal, backends: Sequence[SSSRBackend], path,
                  permutation_csv: bool = False) -> Path:
    panels, perms = panel_data(s, x, backends)

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = len(panels) // 2
    fig, axes = plt.subplots(rows, 2, figsize=(8, 2.4 * rows), squeeze=False)
    for ax, (title, values) in zip(axes.flat, panels):
        ax.imshow(standardized_sigmoid(values).T, origin="lower", aspect="auto", cmap="magma",
                  vmin=0.0, vmax=1.0, interpolation="nearest")
        ax.set_title(title, fontsize=9)
        ax.set_xlabel("frame")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    if permutation_csv:
        for model_id, perm in perms.items():
            with open(path.with_name(f"{path.stem}_{model_id}_permutation.csv"), "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["position", "channel"])
                w.writerows(enumerate(perm.tolist()))
    return path
