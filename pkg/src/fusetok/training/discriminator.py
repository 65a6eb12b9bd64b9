from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.parametrizations import weight_norm

from ..model.frontend import stft_magnitude


class SpectrogramDiscriminator(nn.Module):
    """2D conv stack over the log-magnitude STFT at one resolution."""

    def __init__(self, fft_size: int, channels: int = 16, num_feature_maps: int = 4):
        super().__init__()
        self.fft_size = fft_size
        self.hop = fft_size // 4
        self.register_buffer("window", torch.hann_window(fft_size), persistent=False)
        convs = [weight_norm(nn.Conv2d(1, channels, (3, 9), stride=(1, 2), padding=(1, 4)))]
        for _ in range(num_feature_maps - 1):
            convs.append(weight_norm(nn.Conv2d(channels, channels, (3, 5), stride=(1, 2), padding=(1, 2))))
        self.convs = nn.ModuleList(convs)
        self.out = weight_norm(nn.Conv2d(channels, 1, (3, 3), padding=(1, 1)))

    def forward(self, x: torch.Tensor):
        # x: (B, N); spectrogram laid out (B, 1, time, freq)
        mag = stft_magnitude(x, self.fft_size, self.hop, self.window.to(x.dtype))
        h = torch.log(mag.clamp(min=1e-5)).unsqueeze(1)
        feats = []
        for conv in self.convs:
            h = F.leaky_relu(conv(h), 0.1)
            feats.append(h)
        return self.out(h), feats


class MultiFrequencyDiscriminator(nn.Module):
    def __init__(self, fft_sizes=(512, 1024, 2048), channels: int = 16, num_feature_maps: int = 4):
        super().__init__()
        self.discs = nn.ModuleList(SpectrogramDiscriminator(n, channels, num_feature_maps) for n in fft_sizes)

    @property
    def min_length(self) -> int:
        return max(d.fft_size for d in self.discs)

    def forward(self, x: torch.Tensor):
        if x.shape[-1] < self.min_length:
            raise ValueError(f"input of {x.shape[-1]} samples is shorter than the largest fft ({self.min_length})")
        return [d(x) for d in self.discs]
