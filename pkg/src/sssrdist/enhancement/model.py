"""BLSTM mask estimator and mask-based enhancement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..audio_io import PROCESSING_RATE, TimeSignal
from ..representations import DEFAULT_STFT, StftParams, istft_tensor, stft_tensor


@dataclass
class MaskNetConfig:
    input_dim: int = 257
    output_dim: int = 257
    recurrent_layers: int = 2
    recurrent_hidden_size: int = 256
    bidirectional: bool = True
    affine_hidden_size: int = 512
    leaky_slope: float = 0.3

    def __post_init__(self):
        if self.input_dim != self.output_dim:
            raise ValueError("mask output dimension must equal the input dimension")


class MaskNet(nn.Module):
    """Two BLSTM layers, then Linear+LeakyReLU and Linear+Sigmoid.

    Maps a (B, T, F) magnitude spectrogram to a (B, T, F) mask in (0, 1).
    """

    def __init__(self, config: MaskNetConfig = MaskNetConfig(), seed: int = 0):
        super().__init__()
        self.config = config
        self.rng_seed = seed
        gen_state = torch.random.get_rng_state()
        torch.manual_seed(seed)
        self.rnn = nn.LSTM(
            config.input_dim, config.recurrent_hidden_size, num_layers=config.recurrent_layers,
            bidirectional=config.bidirectional, batch_first=True,
        )
        rnn_out = config.recurrent_hidden_size * (2 if config.bidirectional else 1)
        self.hidden = nn.Linear(rnn_out, config.affine_hidden_size)
        self.act = nn.LeakyReLU(config.leaky_slope)
        self.out = nn.Linear(config.affine_hidden_size, config.output_dim)
        torch.random.set_rng_state(gen_state)

    def forward(self, mag: torch.Tensor) -> torch.Tensor:
        squeeze = mag.dim() == 2
        if squeeze:
            mag = mag.unsqueeze(0)
        h, _ = self.rnn(mag)
        mask = torch.sigmoid(self.out(self.act(self.hidden(h))))
        return mask[0] if squeeze else mask


def forward_mask(model: MaskNet, noisy_mag) -> torch.Tensor:
    """Mask for a T x F (or B x T x F) magnitude spectrogram."""
    mag = torch.as_tensor(noisy_mag)
    if not torch.all(torch.isfinite(mag)):
        raise ValueError("non-finite values in mask input")
    dtype = next(model.parameters()).dtype
    return model(mag.to(dtype))


def enhance_tensor(model: nn.Module, wave: torch.Tensor, params: StftParams = DEFAULT_STFT,
                   return_mask: bool = False):
    """Differentiable enhancement of a (N,) or (B, N) waveform.

    The mask scales the noisy magnitude; the noisy phase is reused and the
    result is resynthesized by overlap-add to the input length.
    """
    dtype = next(model.parameters()).dtype
    wave = wave.to(dtype)
    spec = stft_tensor(wave, params)
    mask = model(spec.abs())
    est = istft_tensor(spec * mask, wave.shape[-1], params)
    return (est, mask) if return_mask else est


def enhance(model: nn.Module, x: TimeSignal, params: StftParams = DEFAULT_STFT) -> TimeSignal:
    if x.sample_rate != PROCESSING_RATE:
        raise ValueError(f"enhancement expects {PROCESSING_RATE} Hz input, got {x.sample_rate}")
    with torch.no_grad():
        est = enhance_tensor(model, torch.from_numpy(x.samples), params)
    return TimeSignal(est.double().numpy(), x.sample_rate)


def parameter_checksum(model: nn.Module) -> str:
    import hashlib

    digest = hashlib.sha256()
    for name, p in sorted(model.state_dict().items()):
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(p.detach().cpu().numpy()).tobytes())
    return digest.hexdigest()
