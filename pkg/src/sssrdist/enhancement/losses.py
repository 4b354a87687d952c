"""Training losses on waveforms.

Every loss takes the clean reference ``s`` and the enhanced estimate ``est``
as (N,) or (B, N) tensors and returns a scalar tensor differentiable w.r.t.
``est``. Batched inputs are reduced by their mean.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import torch

from ..metrics import SI_SDR_CEILING_DB
from ..representations import DEFAULT_STFT, SSSRBackend, StftParams, magnitude_tensor

LOSS_NAMES = ("sg", "fe_hubert", "ol_hubert", "fe_xlsr", "ol_xlsr", "sisdr", "stoi")


class LossConfigError(ValueError):
    pass


def _squared_error(a: torch.Tensor, b: torch.Tensor, reduction: str) -> torch.Tensor:
    sq = (a - b) ** 2
    if reduction == "mean":
        return sq.mean()
    if reduction == "sum":
        # sum over each utterance's T x F grid, mean over the batch
        return sq.sum() / (sq.shape[0] if sq.dim() == 3 else 1)
    raise LossConfigError(f"unknown reduction {reduction!r}")


def loss_sg(s: torch.Tensor, est: torch.Tensor, params: StftParams = DEFAULT_STFT,
            reduction: str = "mean") -> torch.Tensor:
    target = magnitude_tensor(s.to(est.dtype), params).detach()
    return _squared_error(target, magnitude_tensor(est, params), reduction)


def _representation_loss(layer: str, backend: SSSRBackend, s, est, reduction, target=None):
    if target is None:
        with torch.no_grad():
            target = backend.layer(layer, s)
    pred = backend.layer(layer, est)
    t = min(target.shape[-2], pred.shape[-2])
    return _squared_error(target[..., :t, :], pred[..., :t, :], reduction)


def loss_fe(backend: SSSRBackend, s, est, reduction: str = "mean", target=None) -> torch.Tensor:
    """Squared error between feature-encoder representations.

    Gradients reach ``est`` through the frozen backend; ``target`` may carry a
    precomputed FE representation of ``s``.
    """
    return _representation_loss("FE", backend, s, est, reduction, target)


def loss_ol(backend: SSSRBackend, s, est, reduction: str = "mean", target=None) -> torch.Tensor:
    return _representation_loss("OL", backend, s, est, reduction, target)


def soft_si_sdr(s: torch.Tensor, est: torch.Tensor, ceiling: float = SI_SDR_CEILING_DB) -> torch.Tensor:
    """Differentiable SI-SDR in dB that saturates smoothly at ``ceiling``.

    The residual energy is floored by ``10**(-ceiling/10)`` times the target
    energy, so ``est == s`` gives exactly ``ceiling`` with finite gradients.
    """
    s = s.to(est.dtype)
    s = s - s.mean(dim=-1, keepdim=True)
    est = est - est.mean(dim=-1, keepdim=True)
    alpha = (est * s).sum(-1, keepdim=True) / (s * s).sum(-1, keepdim=True)
    target = alpha * s
    target_energy = (target ** 2).sum(-1)
    residual_energy = ((est - target) ** 2).sum(-1)
    floor = 10 ** (-ceiling / 10)
    return 10 * torch.log10(target_energy / (residual_energy + floor * target_energy))


def loss_sisdr(s, est, ceiling: float = SI_SDR_CEILING_DB) -> torch.Tensor:
    return -soft_si_sdr(s, est, ceiling).mean()


# --- differentiable STOI plugin ----------------------------------------------

_stoi_plugin: Optional[Callable] = None


def register_stoi_plugin(fn: Optional[Callable]) -> None:
    """Install ``fn(s, est, sample_rate) -> tensor`` as the STOI loss.

    The plugin must return a negative STOI (minimum -1 at ``est == s``).
    Passing ``None`` removes it.
    """
    global _stoi_plugin
    _stoi_plugin = fn


def _default_stoi_plugin() -> Optional[Callable]:
    try:
        from torch_stoi import NegSTOILoss
    except Exception:
        return None
    module = NegSTOILoss(sample_rate=16000)
    return lambda s, est, rate: module(est, s.to(est.dtype)).mean()


def stoi_plugin() -> Callable:
    plugin = _stoi_plugin or _default_stoi_plugin()
    if plugin is None:
        raise LossConfigError(
            "the stoi loss needs a differentiable STOI plugin; install torch_stoi "
            "or call register_stoi_plugin()"
        )
    return plugin


def loss_stoi(s, est) -> torch.Tensor:
    return stoi_plugin()(s, est, 16000)


STOI_LOSS_MINIMUM = -1.0


def make_loss(name: str, backends: Optional[dict] = None, reduction: str = "mean",
              params: StftParams = DEFAULT_STFT) -> Callable:
    """Resolve a loss name to ``fn(s, est, target=None) -> tensor``."""
    if name not in LOSS_NAMES:
        raise LossConfigError(f"unknown loss {name!r}; expected one of {LOSS_NAMES}")
    if name == "sg":
        return lambda s, est, target=None: loss_sg(s, est, params, reduction)
    if name == "sisdr":
        return lambda s, est, target=None: loss_sisdr(s, est)
    if name == "stoi":
        plugin = stoi_plugin()
        return lambda s, est, target=None: plugin(s, est, 16000)
    layer, model_id = name.split("_")
    backend = (backends or {}).get(model_id)
    if backend is None:
        raise LossConfigError(f"loss {name!r} needs a loaded {model_id} backend")
    fn = loss_fe if layer == "fe" else loss_ol
    return lambda s, est, target=None: fn(backend, s, est, reduction, target)


def loss_minimum(name: str) -> float:
    if name == "sisdr":
        return -SI_SDR_CEILING_DB
    if name == "stoi":
        return STOI_LOSS_MINIMUM
    return 0.0


def is_finite(value: torch.Tensor) -> bool:
    return math.isfinite(float(value))
