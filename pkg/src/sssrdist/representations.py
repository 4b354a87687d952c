"""Spectrogram and self-supervised speech representations.

The STFT path is implemented on torch tensors so the same code serves the
analysis pipeline (numpy in, numpy out) and the differentiable training
losses. SSSR backends wrap HuBERT / wav2vec2-XLSR models from
``transformers`` and expose only the feature-encoder (FE) and output-layer
(OL) representations.
"""

from __future__ import annotations

import hashlib
import os
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .audio_io import PROCESSING_RATE, TimeSignal

MODEL_IDS = ("hubert", "xlsr")
LAYERS = ("FE", "OL")
FE_CHANNELS = 512
OL_CHANNELS = {"hubert": 768, "xlsr": 1024}
DEFAULT_CHECKPOINTS = {
    "hubert": "facebook/hubert-base-ls960",
    "xlsr": "facebook/wav2vec2-xls-r-300m",
}
CACHE_ENV = "SSSRDIST_CACHE"


class RepresentationError(ValueError):
    pass


class BackendLoadError(RuntimeError):
    pass


# --- spectrograms ----------------------------------------------------------

@dataclass(frozen=True)
class StftParams:
    fft_size: int = 512
    window_length_ms: float = 32.0
    hop_ms: float = 16.0
    window: str = "hamming"

    def window_length(self, sample_rate: int = PROCESSING_RATE) -> int:
        return int(round(self.window_length_ms * sample_rate / 1000))

    def hop(self, sample_rate: int = PROCESSING_RATE) -> int:
        return int(round(self.hop_ms * sample_rate / 1000))

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def window_tensor(self, sample_rate: int = PROCESSING_RATE, dtype=torch.float64) -> torch.Tensor:
        n = self.window_length(sample_rate)
        if self.window == "hamming":
            return torch.hamming_window(n, periodic=True, dtype=dtype)
        if self.window == "hann":
            return torch.hann_window(n, periodic=True, dtype=dtype)
        raise RepresentationError(f"unsupported window {self.window!r}")


DEFAULT_STFT = StftParams()


@dataclass
class Spectrogram:
    magnitude: np.ndarray  # T x F_Hz
    phase: np.ndarray  # T x F_Hz, radians
    params: StftParams
    origin_length: int

    @property
    def shape(self):
        return self.magnitude.shape


def stft_tensor(wave: torch.Tensor, params: StftParams = DEFAULT_STFT,
                sample_rate: int = PROCESSING_RATE) -> torch.Tensor:
    """Complex STFT of ``wave`` (..., N) as a (..., T, F_Hz) tensor.

    Framing is centered with reflect padding of half a window on each side,
    so ``T = 1 + N // hop``.
    """
    win_len = params.window_length(sample_rate)
    if wave.shape[-1] < win_len:
        raise RepresentationError(f"signal of {wave.shape[-1]} samples is shorter than one window ({win_len})")
    spec = torch.stft(
        wave,
        n_fft=params.fft_size,
        hop_length=params.hop(sample_rate),
        win_length=win_len,
        window=params.window_tensor(sample_rate, wave.dtype).to(wave.device),
        center=True,
        pad_mode="reflect",
        return_complex=True,
    )
    return spec.transpose(-1, -2)


def istft_tensor(spec: torch.Tensor, length: int, params: StftParams = DEFAULT_STFT,
                 sample_rate: int = PROCESSING_RATE) -> torch.Tensor:
    """Weighted overlap-add inverse of :func:`stft_tensor`.

    Frames are windowed again on synthesis and the sum is divided by the
    overlapped squared-window envelope.
    """
    real_dtype = spec.real.dtype
    return torch.istft(
        spec.transpose(-1, -2),
        n_fft=params.fft_size,
        hop_length=params.hop(sample_rate),
        win_length=params.window_length(sample_rate),
        window=params.window_tensor(sample_rate, real_dtype).to(spec.device),
        center=True,
        length=length,
    )


def magnitude_tensor(wave: torch.Tensor, params: StftParams = DEFAULT_STFT) -> torch.Tensor:
    return stft_tensor(wave, params).abs()


def stft(sig: TimeSignal, params: StftParams = DEFAULT_STFT) -> Spectrogram:
    if sig.sample_rate != PROCESSING_RATE:
        raise RepresentationError(f"stft expects {PROCESSING_RATE} Hz input, got {sig.sample_rate}")
    spec = stft_tensor(torch.from_numpy(sig.samples), params, sig.sample_rate)
    return Spectrogram(spec.abs().numpy(), spec.angle().numpy(), params, len(sig))


def istft_overlap_add(mag: np.ndarray, phase: np.ndarray, params: StftParams = DEFAULT_STFT,
                      out_length: Optional[int] = None) -> TimeSignal:
    mag = np.asarray(mag, dtype=np.float64)
    phase = np.asarray(phase, dtype=np.float64)
    if mag.shape != phase.shape:
        raise RepresentationError(f"magnitude {mag.shape} and phase {phase.shape} shapes differ")
    if mag.ndim != 2 or mag.shape[1] != params.n_bins:
        raise RepresentationError(f"expected a T x {params.n_bins} matrix, got {mag.shape}")
    if out_length is None:
        out_length = (mag.shape[0] - 1) * params.hop()
    spec = torch.polar(torch.from_numpy(mag), torch.from_numpy(phase))
    wave = istft_tensor(spec, out_length, params)
    return TimeSignal(wave.numpy(), PROCESSING_RATE)


# --- SSSR backends ---------------------------------------------------------

@dataclass
class SSSRRepresentation:
    values: np.ndarray  # T x F
    model_id: str
    layer: str

    def __post_init__(self):
        if self.layer not in LAYERS:
            raise RepresentationError(f"unknown layer {self.layer!r}")
        if not np.all(np.isfinite(self.values)):
            raise RepresentationError("representation contains non-finite values")

    @property
    def shape(self):
        return self.values.shape


@dataclass
class SSSRBackend:
    """A frozen pretrained speech model exposing FE and OL hooks.

    ``metadata`` records the input preprocessing convention and the encoder
    frame geometry discovered when the backend was loaded.
    """

    model_id: str
    checkpoint_ref: str
    model: torch.nn.Module
    normalize_input: bool
    receptive_field: int = 400
    frame_hop: int = 320
    metadata: dict = field(default_factory=dict)

    frozen = True
    sample_rate = PROCESSING_RATE

    @property
    def dtype(self) -> torch.dtype:
        return next(self.model.parameters()).dtype

    def num_frames(self, n_samples: int) -> int:
        if n_samples < self.receptive_field:
            return 0
        return (n_samples - self.receptive_field) // self.frame_hop + 1

    def _prepare(self, wave: torch.Tensor) -> torch.Tensor:
        if wave.dim() == 1:
            wave = wave.unsqueeze(0)
        if wave.shape[-1] < self.receptive_field:
            raise RepresentationError(
                f"input of {wave.shape[-1]} samples is shorter than one encoder frame ({self.receptive_field})"
            )
        wave = wave.to(self.dtype)
        if self.normalize_input:
            mean = wave.mean(dim=-1, keepdim=True)
            var = wave.var(dim=-1, keepdim=True, unbiased=False)
            wave = (wave - mean) / torch.sqrt(var + 1e-7)
        return wave

    def fe(self, wave: torch.Tensor) -> torch.Tensor:
        """Feature-encoder output, (B, T, 512). Differentiable w.r.t. ``wave``."""
        return self.model.feature_extractor(self._prepare(wave)).transpose(1, 2)

    def ol(self, wave: torch.Tensor) -> torch.Tensor:
        """Final transformer layer output, (B, T, F_OL)."""
        return self.model(self._prepare(wave)).last_hidden_state

    def both(self, wave: torch.Tensor):
        captured = {}
        handle = self.model.feature_extractor.register_forward_hook(
            lambda mod, inp, out: captured.__setitem__("fe", out)
        )
        try:
            ol = self.model(self._prepare(wave)).last_hidden_state
        finally:
            handle.remove()
        return captured["fe"].transpose(1, 2), ol

    def layer(self, name: str, wave: torch.Tensor) -> torch.Tensor:
        if name == "FE":
            return self.fe(wave)
        if name == "OL":
            return self.ol(wave)
        raise RepresentationError(f"unknown layer {name!r}")

    def parameter_checksum(self) -> str:
        digest = hashlib.sha256()
        for name, p in sorted(self.model.state_dict().items()):
            digest.update(name.encode())
            digest.update(p.detach().cpu().contiguous().numpy().tobytes())
        return digest.hexdigest()


_load_locks = {m: threading.Lock() for m in MODEL_IDS}


def cache_dir(override=None) -> Optional[str]:
    return str(override) if override else os.environ.get(CACHE_ENV)


def _architecture_config(model_id: str, small: bool):
    from transformers import HubertConfig, Wav2Vec2Config

    if model_id == "hubert":
        cfg = HubertConfig()
    else:
        # wav2vec2-xls-r-300m geometry
        cfg = Wav2Vec2Config(
            hidden_size=1024, num_hidden_layers=24, num_attention_heads=16, intermediate_size=4096,
            feat_extract_norm="layer", do_stable_layer_norm=True, conv_bias=True,
        )
    if small:
        cfg.num_hidden_layers = 2
    return cfg


def _build_model(model_id: str, checkpoint_ref: str, cache: Optional[str]):
    from transformers import HubertModel, Wav2Vec2Model

    cls = HubertModel if model_id == "hubert" else Wav2Vec2Model
    if checkpoint_ref.startswith("random"):
        # "random[-small][:seed]": real architecture, seeded random weights
        kind, _, seed = checkpoint_ref.partition(":")
        if kind not in ("random", "random-small"):
            raise BackendLoadError(f"unknown checkpoint reference {checkpoint_ref!r}")
        torch.manual_seed(int(seed) if seed else 0)
        return cls(_architecture_config(model_id, kind == "random-small"))
    source = DEFAULT_CHECKPOINTS[model_id] if checkpoint_ref == "default" else checkpoint_ref
    try:
        return cls.from_pretrained(source, cache_dir=cache)
    except Exception as exc:  # transformers raises several unrelated types here
        raise BackendLoadError(f"could not load {model_id} checkpoint {source!r}: {exc}") from exc


def load_backend(model_id: str, checkpoint_ref: str = "default", dtype=torch.float32,
                 cache: Optional[str] = None) -> SSSRBackend:
    """Load an SSSR model in frozen, deterministic inference mode.

    ``checkpoint_ref`` is ``"default"`` (the published HuBERT-base LS960 /
    XLS-R 300M weights), a local directory or hub id accepted by
    ``from_pretrained``, or ``"random[:seed]"`` / ``"random-small[:seed]"``
    for the same architecture with seeded random weights (the small variant
    keeps two transformer layers). Downloads go to ``$SSSRDIST_CACHE`` unless
    ``cache`` is given.
    """
    if model_id not in MODEL_IDS:
        raise BackendLoadError(f"unknown model id {model_id!r}; expected one of {MODEL_IDS}")
    with _load_locks[model_id]:
        model = _build_model(model_id, checkpoint_ref, cache_dir(cache))
    model = model.to(dtype).eval()
    model.requires_grad_(False)
    cfg = model.config
    receptive, hop = 1, 1
    for k, s in zip(cfg.conv_kernel, cfg.conv_stride):
        receptive += (k - 1) * hop
        hop *= s
    backend = SSSRBackend(
        model_id=model_id,
        checkpoint_ref=checkpoint_ref,
        model=model,
        # XLS-R ships a normalizing feature extractor; HuBERT-base does not
        normalize_input=model_id == "xlsr",
        receptive_field=receptive,
        frame_hop=hop,
    )
    probe_len = PROCESSING_RATE
    with torch.no_grad():
        t_probe = backend.fe(torch.zeros(1, probe_len, dtype=dtype)).shape[1]
    if t_probe != backend.num_frames(probe_len):
        raise BackendLoadError(f"{model_id}: probe gave {t_probe} frames, geometry predicts {backend.num_frames(probe_len)}")
    backend.metadata = {
        "model_id": model_id,
        "checkpoint": checkpoint_ref,
        "normalize_input": backend.normalize_input,
        "receptive_field": receptive,
        "frame_hop": hop,
        "frames_per_second_probe": t_probe,
        "fe_channels": FE_CHANNELS,
        "ol_channels": OL_CHANNELS[model_id],
    }
    return backend


def _signal_tensor(backend: SSSRBackend, sig: TimeSignal) -> torch.Tensor:
    if sig.sample_rate != backend.sample_rate:
        raise RepresentationError(f"{backend.model_id} expects {backend.sample_rate} Hz input, got {sig.sample_rate}")
    return torch.from_numpy(sig.samples).to(backend.dtype)


def extract_fe(backend: SSSRBackend, sig: TimeSignal) -> SSSRRepresentation:
    with torch.no_grad():
        values = backend.fe(_signal_tensor(backend, sig))[0]
    return SSSRRepresentation(values.double().numpy(), backend.model_id, "FE")


def extract_ol(backend: SSSRBackend, sig: TimeSignal) -> SSSRRepresentation:
    with torch.no_grad():
        values = backend.ol(_signal_tensor(backend, sig))[0]
    return SSSRRepresentation(values.double().numpy(), backend.model_id, "OL")


def extract(backend: SSSRBackend, layer: str, sig: TimeSignal) -> SSSRRepresentation:
    if layer == "FE":
        return extract_fe(backend, sig)
    if layer == "OL":
        return extract_ol(backend, sig)
    raise RepresentationError(f"unknown layer {layer!r}")


# --- binary matrix container -----------------------------------------------
# Layout: b"SSRM" magic, uint8 version, uint64 rows, uint64 cols (little endian),
# then rows*cols float32 values in row-major order.

_MAGIC = b"SSRM"
_VERSION = 1
_HEADER = struct.Struct("<4sBQQ")


def write_matrix(path, values: np.ndarray) -> None:
    values = np.asarray(values)
    if values.ndim != 2:
        raise RepresentationError("only 2-D matrices can be stored")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, values.shape[0], values.shape[1]))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise RepresentationError(f"{path}: truncated header")
        magic, version, rows, cols = _HEADER.unpack(head)
        if magic != _MAGIC or version != _VERSION:
            raise RepresentationError(f"{path}: not a matrix container")
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != rows * cols:
        raise RepresentationError(f"{path}: expected {rows * cols} values, found {data.size}")
    return data.reshape(rows, cols).astype(np.float64)
