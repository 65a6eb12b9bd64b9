"""Conditional flow matching over unified latents.

A small DiT-style transformer predicts the velocity of the straight path
z_t = (1 - t) z0 + t z1 from Gaussian noise z0 to a data latent z1.
Conditioning is a class id (index ``num_classes`` is the learned null
class used for classifier-free guidance) or, optionally, a fixed caption
embedding vector.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from ..config import FlowConfig, RunConfig
from ..dsp import Waveform
from ..model.layers import sinusoidal_positions


class FlowError(ValueError):
    pass


def timestep_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=t.dtype) / half)
    args = t[:, None] * 1000.0 * freqs[None]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    return nn.functional.pad(emb, (0, dim % 2))


def _modulate(x, shift, scale):
    return x * (1 + scale[:, None]) + shift[:, None]


class DiTBlock(nn.Module):
    """Pre-norm attention + MLP block with adaptive layer-norm (zero-gated) conditioning."""

    def __init__(self, width: int, heads: int, mlp_ratio: float = 4.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(width, elementwise_affine=False, eps=1e-6)
        self.attn = nn.MultiheadAttention(width, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(width, elementwise_affine=False, eps=1e-6)
        hidden = int(width * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(width, hidden), nn.GELU(approximate="tanh"), nn.Linear(hidden, width))
        self.ada = nn.Sequential(nn.SiLU(), nn.Linear(width, 6 * width))
        nn.init.zeros_(self.ada[1].weight)
        nn.init.zeros_(self.ada[1].bias)

    def forward(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        s1, sc1, g1, s2, sc2, g2 = self.ada(c).chunk(6, dim=-1)
        h = _modulate(self.norm1(x), s1, sc1)
        x = x + g1[:, None] * self.attn(h, h, h, need_weights=False)[0]
        return x + g2[:, None] * self.mlp(_modulate(self.norm2(x), s2, sc2))


class FlowModel(nn.Module):
    def __init__(self, latent_dim: int, cfg: FlowConfig, cond_dim: int = 0):
        super().__init__()
        if cfg.width % cfg.heads:
            raise FlowError(f"width {cfg.width} not divisible by {cfg.heads} heads")
        self.latent_dim, self.width, self.depth = latent_dim, cfg.width, cfg.depth
        self.num_classes = cfg.num_classes
        self.null_class = cfg.num_classes
        self.inp = nn.Linear(latent_dim, cfg.width)
        self.t_embed = nn.Sequential(nn.Linear(cfg.width, cfg.width), nn.SiLU(), nn.Linear(cfg.width, cfg.width))
        self.class_embed = nn.Embedding(cfg.num_classes + 1, cfg.width)
        self.vec_proj = nn.Linear(cond_dim, cfg.width) if cond_dim else None
        self.null_vec = nn.Parameter(torch.zeros(cfg.width)) if cond_dim else None
        self.blocks = nn.ModuleList(DiTBlock(cfg.width, cfg.heads) for _ in range(cfg.depth))
        self.final_norm = nn.LayerNorm(cfg.width, elementwise_affine=False, eps=1e-6)
        self.final_ada = nn.Sequential(nn.SiLU(), nn.Linear(cfg.width, 2 * cfg.width))
        self.out = nn.Linear(cfg.width, latent_dim)
        for m in (self.final_ada[1], self.out):
            nn.init.zeros_(m.weight)
            nn.init.zeros_(m.bias)

    @property
    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def null_condition(self, batch: int) -> torch.Tensor:
        return torch.full((batch,), self.null_class, dtype=torch.long)

    def _cond(self, cond) -> torch.Tensor:
        if cond.dtype in (torch.int32, torch.int64):
            if cond.min() < 0 or cond.max() > self.null_class:
                raise FlowError(f"class ids must lie in [0, {self.null_class}]")
            return self.class_embed(cond)
        if self.vec_proj is None:
            raise FlowError("vector conditions need a model built with cond_dim > 0")
        # rows of all-NaN mark the null condition for vector inputs
        null = torch.isnan(cond).all(dim=-1, keepdim=True)
        return torch.where(null, self.null_vec, self.vec_proj(torch.nan_to_num(cond)))

    def forward(self, z_t: torch.Tensor, t: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        if z_t.dim() != 3 or z_t.shape[-1] != self.latent_dim:
            raise FlowError(f"expected (b, t, {self.latent_dim}) latents, got {tuple(z_t.shape)}")
        t = torch.as_tensor(t, dtype=z_t.dtype).reshape(-1).expand(z_t.shape[0])
        c = self.t_embed(timestep_embedding(t, self.width)) + self._cond(cond)
        x = self.inp(z_t) + sinusoidal_positions(z_t.shape[1], self.width).to(z_t)
        for blk in self.blocks:
            x = blk(x, c)
        shift, scale = self.final_ada(c).chunk(2, dim=-1)
        return self.out(_modulate(self.final_norm(x), shift, scale))


def flow_path(z0: torch.Tensor, z1: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
    """Linear interpolant; ``t`` has one entry per batch item."""
    if z0.shape != z1.shape:
        raise FlowError(f"z0 {tuple(z0.shape)} and z1 {tuple(z1.shape)} differ in shape")
    tt = torch.as_tensor(t, dtype=z0.dtype).reshape(-1, *([1] * (z0.dim() - 1)))
    return (1 - tt) * z0 + tt * z1


def flow_matching_loss(model, z1: torch.Tensor, cond, t: torch.Tensor, z0: torch.Tensor) -> torch.Tensor:
    """MSE between the predicted velocity at z_t and the path velocity z1 - z0."""
    z_t = flow_path(z0, z1, t)
    return torch.mean((model(z_t, t, cond) - (z1 - z0)) ** 2)


def guided_velocity(model, z: torch.Tensor, t, cond, cfg_scale: float) -> torch.Tensor:
    """v_uncond + cfg_scale * (v_cond - v_uncond); scales 1 and 0 skip the unused branch."""
    if cfg_scale < 0:
        raise FlowError(f"guidance scale must be non-negative, got {cfg_scale}")
    if cfg_scale == 1:
        return model(z, t, cond)
    null = _null_like(model, cond, z.shape[0])
    if cfg_scale == 0:
        return model(z, t, null)
    v_c = model(z, t, cond)
    v_u = model(z, t, null)
    return v_u + cfg_scale * (v_c - v_u)


def _null_like(model, cond, batch: int):
    if cond.dtype in (torch.int32, torch.int64):
        return model.null_condition(batch)
    return torch.full_like(cond, float("nan"))


@torch.no_grad()
def sample_latent(
    model,
    cond: torch.Tensor,
    frames: int,
    steps: int = 25,
    cfg_scale: float = 5.0,
    generator: torch.Generator | None = None,
    z0: torch.Tensor | None = None,
) -> torch.Tensor:
    """Euler integration from t = 0 (noise) to t = 1 over ``steps`` equal steps."""
    if steps < 1:
        raise FlowError("steps must be at least 1")
    if cfg_scale < 0:
        raise FlowError(f"guidance scale must be non-negative, got {cfg_scale}")
    model.eval()
    if z0 is None:
        z0 = torch.randn(cond.shape[0], frames, model.latent_dim, generator=generator)
    z = z0.clone()
    dt = 1.0 / steps
    for k in range(steps):
        t = torch.full((z.shape[0],), k * dt)
        z = z + dt * guided_velocity(model, z, t, cond, cfg_scale)
    return z


@torch.no_grad()
def sample_flow(
    cond,
    model,
    tokenizer,
    frames: int = 25,
    steps: int = 25,
    cfg_scale: float = 5.0,
    seed: int = 0,
) -> list[Waveform]:
    """Sample latents for each condition and decode them with the tokenizer."""
    if cfg_scale < 0:
        raise FlowError(f"guidance scale must be non-negative, got {cfg_scale}")
    cond = torch.as_tensor(cond)
    if cond.dim() == 0:
        cond = cond[None]
    g = torch.Generator().manual_seed(seed)
    z = sample_latent(model, cond, frames, steps, cfg_scale, g)
    tokenizer.eval()
    y = tokenizer.decoder(z).double().numpy()
    return [Waveform(row, tokenizer.sample_rate) for row in y]


def train_flow(
    latents: torch.Tensor,
    labels,
    cfg: RunConfig,
    steps: int | None = None,
    model: FlowModel | None = None,
) -> FlowModel:
    """Class-conditional flow matching with condition dropout; per-step losses in ``model.history``."""
    fc = cfg.flow
    steps = fc.steps if steps is None else steps
    labels = torch.as_tensor(np.asarray(labels), dtype=torch.long)
    if labels.shape[0] != latents.shape[0]:
        raise FlowError("one label per latent sequence required")
    if model is None:
        with torch.random.fork_rng():
            torch.manual_seed(cfg.seed_for("flow-init"))
            model = FlowModel(latents.shape[-1], fc)
    model.history = getattr(model, "history", [])
    opt = torch.optim.AdamW(model.parameters(), lr=fc.lr, weight_decay=0.0)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, max(steps, 1), eta_min=0.1 * fc.lr)
    gen = cfg.torch_generator("flow-train")
    model.train()
    n = latents.shape[0]
    for _ in range(steps):
        idx = torch.randint(n, (fc.batch_size,), generator=gen)
        z1 = latents[idx]
        cond = labels[idx].clone()
        drop = torch.rand(fc.batch_size, generator=gen) < fc.cond_dropout
        cond[drop] = model.null_class
        t = torch.rand(fc.batch_size, generator=gen)
        z0 = torch.randn(z1.shape, generator=gen)
        loss = flow_matching_loss(model, z1, cond, t, z0)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        sched.step()
        model.history.append(loss.item())
    return model.eval()


def rescale_width_depth(width: int, depth: int, new_width: int) -> int:
    """Depth that keeps width**2 * depth (the transformer parameter count) constant."""
    if min(width, depth, new_width) <= 0:
        raise FlowError("width and depth must be positive")
    return max(1, round(depth * (width / new_width) ** 2))


def block_means(history, block: int = 500) -> list[float]:
    """Means of consecutive non-overlapping ``block``-step windows (a trailing partial block is dropped)."""
    h = np.asarray(history, dtype=np.float64)
    k = h.shape[0] // block
    return [float(v) for v in h[: k * block].reshape(k, block).mean(axis=1)]
