"""Differentiable torch mirrors of the numpy DSP frontend."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from ..dsp import MelConfig, get_window, mel_filterbank


def _center_pad(x: torch.Tensor, pad: int) -> torch.Tensor:
    mode = "reflect" if x.shape[-1] > pad else "constant"
    return F.pad(x.unsqueeze(1), (pad, pad), mode=mode).squeeze(1)


def stft_magnitude(x: torch.Tensor, fft_size: int, hop: int, window: torch.Tensor, eps: float = 1e-14) -> torch.Tensor:
    """Centre-padded STFT magnitude of ``x`` (B, N) -> (B, frames, fft_size // 2 + 1).

    ``eps`` keeps the sqrt differentiable at exact zeros.
    """
    frames = _center_pad(x, fft_size // 2).unfold(-1, fft_size, hop)
    spec = torch.fft.rfft(frames * window, dim=-1)
    power = spec.real.square() + spec.imag.square()
    return torch.sqrt(torch.clamp(power, min=eps))


class LogMel(nn.Module):
    """Log-mel frames, shape (B, ceil(N / hop), n_mels); matches :func:`fusetok.dsp.melspec`."""

    def __init__(self, cfg: MelConfig):
        super().__init__()
        self.cfg = cfg
        self.register_buffer("fb", torch.from_numpy(mel_filterbank(cfg)).float(), persistent=False)
        self.register_buffer("window", torch.from_numpy(get_window(cfg.window, cfg.fft_size)).float(), persistent=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        t = math.ceil(x.shape[-1] / self.cfg.hop)
        mag = stft_magnitude(x, self.cfg.fft_size, self.cfg.hop, self.window.to(x.dtype))[:, :t]
        mel = mag @ self.fb.to(x.dtype).T
        return torch.log(torch.clamp(mel, min=self.cfg.log_floor))


class ISTFT(nn.Module):
    """Inverse STFT with "same" padding: T frames -> exactly T * hop samples.

    torch.istft cannot trim asymmetric padding without failing its NOLA
    check at the edges, so overlap-add is done by hand with ``fold``.
    """

    def __init__(self, fft_size: int, hop: int):
        super().__init__()
        self.fft_size = fft_size
        self.hop = hop
        self.register_buffer("window", torch.hann_window(fft_size), persistent=False)

    def forward(self, spec: torch.Tensor) -> torch.Tensor:
        # spec: (B, fft_size // 2 + 1, T) complex
        b, _, t = spec.shape
        n, hop = self.fft_size, self.hop
        pad = (n - hop) // 2
        win = self.window.to(spec.real.dtype)
        frames = torch.fft.irfft(spec, n, dim=1) * win[None, :, None]
        out_len = (t - 1) * hop + n
        y = F.fold(frames, output_size=(1, out_len), kernel_size=(1, n), stride=(1, hop))[:, 0, 0]
        env = F.fold(
            win.square().expand(1, t, -1).transpose(1, 2),
            output_size=(1, out_len),
            kernel_size=(1, n),
            stride=(1, hop),
        )[0, 0, 0]
        y = y[:, pad : out_len - pad]
        env = env[pad : out_len - pad]
        return y / env.clamp(min=1e-11)
