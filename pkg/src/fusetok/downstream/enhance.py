"""Speech enhancement in the unified latent space.

A small transformer maps latents of noisy audio to latents of the clean
audio; the frozen tokenizer decodes the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .. import synth
from ..config import RunConfig
from ..dsp import DSPError, Waveform
from ..model.layers import sinusoidal_positions


@dataclass(frozen=True)
class NoisySpec:
    clean: Waveform
    noise: Waveform
    snr_db: float
    gain: float
    mixed: Waveform

    def achieved_snr_db(self) -> float:
        scaled = self.gain * self.noise.samples
        return 10 * math.log10(np.sum(self.clean.samples**2) / np.sum(scaled**2))


def mix_at_snr(clean: Waveform, noise: Waveform, snr_db: float) -> NoisySpec:
    """clean + g * noise with g chosen so the energy ratio equals ``snr_db``.

    ``snr_db = inf`` returns the clean signal unchanged (g = 0).
    """
    if len(clean) != len(noise):
        raise DSPError(f"lengths differ: {len(clean)} vs {len(noise)}")
    if clean.sample_rate != noise.sample_rate:
        raise DSPError("sample rates differ")
    e_clean = float(np.sum(clean.samples**2))
    if e_clean == 0:
        raise DSPError("clean signal has zero energy; SNR is undefined")
    if math.isinf(snr_db) and snr_db > 0:
        return NoisySpec(clean, noise, snr_db, 0.0, Waveform(clean.samples.copy(), clean.sample_rate))
    if math.isnan(snr_db) or math.isinf(snr_db):
        raise DSPError(f"invalid SNR {snr_db}")
    e_noise = float(np.sum(noise.samples**2))
    if e_noise == 0:
        raise DSPError("noise has zero energy; cannot reach a finite SNR")
    g = math.sqrt(e_clean / (e_noise * 10 ** (snr_db / 10)))
    return NoisySpec(clean, noise, snr_db, g, Waveform(clean.samples + g * noise.samples, clean.sample_rate))


def noise_clip(rng: np.random.Generator, n: int) -> np.ndarray:
    """Coloured noise with a random spectral slope, optionally amplitude-modulated."""
    x = synth.colored_noise(rng, n, rng.uniform(-1.0, 2.0))
    if rng.random() < 0.5:
        t = np.arange(n) / synth.SR
        x = x * (1 + 0.5 * np.sin(2 * np.pi * rng.uniform(0.5, 4) * t))
    return x


def se_pairs(n: int, rng: np.random.Generator, seconds: float = 1.28, snr_db: float = 5.0) -> list[NoisySpec]:
    """Speech-like and tonal clean clips mixed with shaped noise at a fixed SNR."""
    samples = int(round(seconds * synth.SR))
    clean = synth.speech_set(n - n // 4, rng, seconds) + synth.probe_task("pitch_class", n // 4, rng, seconds).waves
    order = rng.permutation(n)
    return [mix_at_snr(clean[i], Waveform(noise_clip(rng, samples), synth.SR), snr_db) for i in order]


def se_training_pairs(cfg: RunConfig, n: int | None = None) -> list[tuple[Waveform, Waveform]]:
    """(noisy, clean) training pairs at ``cfg.denoiser.snr_db`` plus clean identity pairs."""
    dc = cfg.denoiser
    n = dc.train_pairs if n is None else n
    mixed = se_pairs(n, cfg.rng("se-train"), snr_db=dc.snr_db)
    pairs = [(p.mixed, p.clean) for p in mixed]
    return pairs + [(p.clean, p.clean) for p in mixed[: int(dc.clean_fraction * n)]]


class Denoiser(nn.Module):
    """Residual transformer over (b, t, d) latents; the zero-initialised output
    projection makes a fresh denoiser the identity map."""

    def __init__(self, dim: int, layers: int = 3, heads: int = 4):
        super().__init__()
        self.dim, self.layers, self.heads = dim, layers, heads
        self.inp = nn.Linear(dim, dim)
        layer = nn.TransformerEncoderLayer(
            dim, heads, 4 * dim, dropout=0.0, activation="gelu", batch_first=True, norm_first=True
        )
        self.body = nn.TransformerEncoder(layer, layers, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(dim)
        self.out = nn.Linear(dim, dim)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)
        self.history: list[float] = []

    @property
    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.dim() != 3 or z.shape[-1] != self.dim:
            raise ValueError(f"expected (b, t, {self.dim}) latents, got {tuple(z.shape)}")
        h = self.inp(z) + sinusoidal_positions(z.shape[1], self.dim).to(z)
        return z + self.out(self.norm(self.body(h)))


@torch.no_grad()
def unified_latents(tokenizer, waves: list[Waveform], batch_size: int = 32) -> torch.Tensor:
    tokenizer.eval()
    out = []
    for i in range(0, len(waves), batch_size):
        x = torch.tensor(np.stack([w.samples for w in waves[i : i + batch_size]]), dtype=torch.float32)
        out.append(tokenizer.semantic_features(x) + tokenizer.acoustic_features(x))
    return torch.cat(out)


def latent_mse(denoiser: Denoiser, z_noisy: torch.Tensor, z_clean: torch.Tensor) -> float:
    with torch.no_grad():
        return float(torch.mean((denoiser(z_noisy) - z_clean) ** 2))


def train_denoiser(
    tokenizer,
    pairs: list[tuple[Waveform, Waveform]] | list[NoisySpec],
    cfg: RunConfig,
    steps: int | None = None,
) -> Denoiser:
    """Fit a denoiser by MSE between denoised noisy latents and clean latents.

    ``pairs`` holds (noisy, clean) tuples or NoisySpec records. The tokenizer
    is only read.
    """
    dc = cfg.denoiser
    steps = dc.steps if steps is None else steps
    pairs = [(p.mixed, p.clean) if isinstance(p, NoisySpec) else p for p in pairs]
    z_noisy = unified_latents(tokenizer, [p[0] for p in pairs])
    z_clean = unified_latents(tokenizer, [p[1] for p in pairs])
    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed_for("denoiser-init"))
        model = Denoiser(z_noisy.shape[-1], dc.layers, dc.heads)
    opt = torch.optim.AdamW(model.parameters(), lr=dc.lr, weight_decay=0.0)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, max(steps, 1), eta_min=0.1 * dc.lr)
    rng = cfg.rng("denoiser-batches")
    model.train()
    for _ in range(steps):
        idx = torch.from_numpy(rng.integers(len(pairs), size=min(dc.batch_size, len(pairs))))
        loss = torch.mean((model(z_noisy[idx]) - z_clean[idx]) ** 2)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        sched.step()
        model.history.append(loss.item())
    return model.eval()


@torch.no_grad()
def enhance(w_noisy: Waveform, denoiser: Denoiser, tokenizer) -> Waveform:
    """Decode the denoised unified latent of ``w_noisy``."""
    tokenizer.eval()
    z = unified_latents(tokenizer, [w_noisy])
    y = tokenizer.decoder(denoiser.eval()(z))
    return Waveform(y[0].double().numpy(), w_noisy.sample_rate)


@torch.no_grad()
def reconstruct(w: Waveform, tokenizer) -> Waveform:
    """Plain tokenizer round trip, the baseline enhancement is compared against."""
    tokenizer.eval()
    y = tokenizer.decoder(unified_latents(tokenizer, [w]))
    return Waveform(y[0].double().numpy(), w.sample_rate)
