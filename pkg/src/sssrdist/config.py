"""Declarative INI run configuration.

Sections mirror the pipeline stages. Unknown sections or keys are rejected,
and every output records the hash of the fully resolved configuration.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    root: str = ""
    layout: str = "voicebank"
    split: str = "test"
    holdout_speakers: int = 2


@dataclass
class StftSection:
    fft_size: int = 512
    window_length_ms: float = 32.0
    hop_ms: float = 16.0
    window: str = "hamming"


@dataclass
class BackendsSection:
    # "spectrogram-only" or a comma list of model ids
    models: str = "spectrogram-only"
    hubert_checkpoint: str = "default"
    xlsr_checkpoint: str = "default"
    cache_dir: str = ""

    def model_ids(self) -> list[str]:
        if self.models.strip() in ("", "spectrogram-only", "none"):
            return []
        return [m.strip() for m in self.models.split(",") if m.strip()]


@dataclass
class DistancesSection:
    layers: str = "FE,OL"
    reduction: str = "mean"

    def layer_list(self) -> list[str]:
        return [l.strip() for l in self.layers.split(",") if l.strip()]


@dataclass
class TrainingSection:
    loss: str = "sg"
    epochs: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 1
    seed: int = 0
    validation_metric: str = "pesq"
    grad_clip: float = 0.0
    recurrent_hidden_size: int = 256
    affine_hidden_size: int = 512
    leaky_slope: float = 0.3


@dataclass
class EvaluationSection:
    metrics: str = "pesq,stoi,composite,si_sdr"

    def metric_list(self) -> list[str]:
        return [m.strip() for m in self.metrics.split(",") if m.strip()]


@dataclass
class OutputSection:
    dir: str = "runs"
    workers: int = 1
    permutation_csv: bool = False


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    stft: StftSection = field(default_factory=StftSection)
    backends: BackendsSection = field(default_factory=BackendsSection)
    distances: DistancesSection = field(default_factory=DistancesSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    output: OutputSection = field(default_factory=OutputSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def set(self, dotted: str, text: str) -> None:
        section_name, _, key = dotted.partition(".")
        if not key:
            raise ConfigError(f"expected section.key, got {dotted!r}")
        section = getattr(self, section_name, None)
        if section is None or not dataclasses.is_dataclass(section):
            raise ConfigError(f"unknown config section {section_name!r}")
        fields = {f.name: f for f in dataclasses.fields(section)}
        if key not in fields:
            raise ConfigError(f"unknown config key {section_name}.{key}")
        setattr(section, key, _coerce(fields[key], text, dotted))


def _coerce(f: dataclasses.Field, text: str, where: str):
    kind = type(f.default)
    text = text.strip()
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {text!r} as {kind.__name__}") from None


def load_config(path: Optional[str] = None, overrides: Optional[list[str]] = None) -> RunConfig:
    """Read an INI file (optional) and apply ``section.key=value`` overrides."""
    cfg = RunConfig()
    if path:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {p}")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(p.read_text())
        except configparser.Error as exc:
            raise ConfigError(f"{p}: {exc}") from exc
        for section in parser.sections():
            for key, value in parser.items(section):
                cfg.set(f"{section}.{key}", value)
    for item in overrides or []:
        dotted, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        cfg.set(dotted.strip(), value)
    return cfg
