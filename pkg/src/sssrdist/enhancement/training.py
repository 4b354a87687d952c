"""Training loop, per-epoch checkpoints and checkpoint selection."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from ..audio_io import DatasetManifest, UtterancePair, load_pair
from ..metrics import pesq_score, si_sdr, stoi_score
from .losses import LOSS_NAMES, LossConfigError, make_loss
from .model import MaskNet, MaskNetConfig, enhance, enhance_tensor

log = logging.getLogger(__name__)

VALIDATION_METRICS = {"pesq": pesq_score, "stoi": stoi_score, "si_sdr": si_sdr}


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, step: int):
        super().__init__(f"non-finite training loss at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


@dataclass
class TrainingConfig:
    loss: str = "sg"
    epochs: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 1
    seed: int = 0
    validation_metric: str = "pesq"
    grad_clip: Optional[float] = None
    reduction: str = "mean"
    model: MaskNetConfig = field(default_factory=MaskNetConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = MaskNetConfig(**self.model)
        if self.loss not in LOSS_NAMES:
            raise LossConfigError(f"unknown loss {self.loss!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.validation_metric not in VALIDATION_METRICS:
            raise ValueError(f"unknown validation metric {self.validation_metric!r}")

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Checkpoint:
    epoch: int
    parameters: dict
    validation_pesq: Optional[float]
    config_hash: str
    train_loss: float
    history: list = field(default_factory=list)
    model_config: dict = field(default_factory=dict)

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        torch.save(asdict(self), path)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls(**torch.load(path, weights_only=False))


def select_checkpoint(checkpoints: Sequence[Checkpoint]) -> Checkpoint:
    """Highest validation score; ties go to the earliest epoch."""
    if not checkpoints:
        raise ValueError("no checkpoints to select from")

    def score(c):
        v = c.validation_pesq
        return -math.inf if v is None or not math.isfinite(v) else v

    best = checkpoints[0]
    for c in checkpoints[1:]:
        if score(c) > score(best) or (score(c) == score(best) and c.epoch < best.epoch):
            best = c
    return best


def _pairs(data) -> list[UtterancePair]:
    if isinstance(data, DatasetManifest):
        return [load_pair(e) for e in data.entries]
    return list(data)


def validate(model: MaskNet, pairs: Sequence[UtterancePair], metric: str = "pesq") -> Optional[float]:
    fn = VALIDATION_METRICS[metric]
    scores = []
    model.eval()
    for pair in pairs:
        value = fn(pair.clean, enhance(model, pair.noisy))
        if value is not None and math.isfinite(value):
            scores.append(value)
    return float(np.mean(scores)) if scores else None


def train(train_data, valid_data, cfg: TrainingConfig, backends: Optional[dict] = None,
          out_dir=None, dtype=torch.float32) -> list[Checkpoint]:
    """Train a MaskNet and return one checkpoint per epoch.

    ``train_data``/``valid_data`` are manifests or sequences of loaded
    UtterancePairs. With ``out_dir`` set, each checkpoint is written to
    ``epoch_XXX.pt`` and the log to ``training_log.csv``.
    """
    train_pairs = _pairs(train_data)
    valid_pairs = _pairs(valid_data)
    if not train_pairs:
        raise ValueError("empty training set")
    torch.manual_seed(cfg.seed)
    model = MaskNet(cfg.model, seed=cfg.seed).to(dtype)
    loss_fn = make_loss(cfg.loss, backends, cfg.reduction)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    tensors = [
        (torch.from_numpy(p.clean.samples).to(dtype), torch.from_numpy(p.noisy.samples).to(dtype))
        for p in train_pairs
    ]
    chash = cfg.config_hash()
    history, checkpoints = [], []
    out_dir = Path(out_dir) if out_dir is not None else None

    for epoch in range(1, cfg.epochs + 1):
        model.train()
        order = rng.permutation(len(tensors))
        losses = []
        mask_lo, mask_hi = math.inf, -math.inf
        for step, start in enumerate(range(0, len(order), cfg.batch_size)):
            optimizer.zero_grad()
            batch_losses = []
            for idx in order[start:start + cfg.batch_size]:
                clean, noisy = tensors[idx]
                est, mask = enhance_tensor(model, noisy, return_mask=True)
                mask_lo = min(mask_lo, mask.detach().min().item())
                mask_hi = max(mask_hi, mask.detach().max().item())
                batch_losses.append(loss_fn(clean, est))
            loss = torch.stack(batch_losses).mean()
            if not math.isfinite(loss.item()):
                raise TrainingDiverged(epoch, step)
            loss.backward()
            if cfg.grad_clip:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            optimizer.step()
            losses.extend(l.item() for l in batch_losses)
        train_loss = float(np.mean(losses))
        valid_score = validate(model, valid_pairs, cfg.validation_metric) if valid_pairs else None
        entry = {"epoch": epoch, "train_loss": train_loss, "valid_pesq": valid_score,
                 "mask_min": mask_lo, "mask_max": mask_hi}
        history.append(entry)
        log.info("epoch %d: train_loss=%.6g valid_%s=%s", epoch, train_loss, cfg.validation_metric, valid_score)
        ckpt = Checkpoint(
            epoch=epoch,
            parameters={k: v.detach().clone() for k, v in model.state_dict().items()},
            validation_pesq=valid_score,
            config_hash=chash,
            train_loss=train_loss,
            history=[dict(h) for h in history],
            model_config=asdict(cfg.model),
        )
        checkpoints.append(ckpt)
        if out_dir is not None:
            ckpt.save(out_dir / f"epoch_{epoch:03d}.pt")
            write_training_log(history, out_dir / "training_log.csv")
    return checkpoints


def write_training_log(history: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "valid_pesq"])
        for h in history:
            w.writerow([h["epoch"], repr(h["train_loss"]), "" if h["valid_pesq"] is None else repr(h["valid_pesq"])])


def model_from_checkpoint(ckpt: Checkpoint) -> MaskNet:
    model = MaskNet(MaskNetConfig(**ckpt.model_config))
    first = next(iter(ckpt.parameters.values()))
    model = model.to(first.dtype)
    model.load_state_dict(ckpt.parameters)
    return model.eval()
