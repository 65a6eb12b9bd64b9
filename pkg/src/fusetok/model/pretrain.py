"""Desk-scale stand-in for the frozen pretrained semantic encoder."""

from __future__ import annotations

import logging

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .. import synth
from ..config import ConfigError, RunConfig
from .tokenizer import Tokenizer

log = logging.getLogger(__name__)


def build_tokenizer(cfg: RunConfig) -> Tokenizer:
    """Seeded tokenizer whose semantic encoder is ready and frozen."""
    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed_for("tokenizer-init"))
        model = Tokenizer(cfg)
    preset = cfg.model.semantic_preset
    if preset == "pretext":
        pretrain_semantic(model, cfg)
    elif preset != "random":
        raise ConfigError(f"unknown semantic preset {preset!r}")
    model.freeze_semantic()
    return model


def pretrain_semantic(model: Tokenizer, cfg: RunConfig, clips_per_task: int = 96, batch_per_task: int = 4) -> list[float]:
    """Multi-task attribute classification on freshly generated clips, then freeze.

    Uses its own random substream, so the clips never coincide with the
    probe sets drawn elsewhere.
    """
    enc = model.semantic
    rng = cfg.rng("semantic-pretext")
    sets = [synth.probe_task(t, clips_per_task, rng, seconds=1.0) for t in synth.PROBE_TASKS]
    data = [torch.tensor(np.stack([w.samples for w in s.waves]), dtype=torch.float32) for s in sets]
    labels = [torch.as_tensor(s.labels) for s in sets]
    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed_for("semantic-pretext-heads"))
        heads = nn.ModuleList(nn.Linear(cfg.model.dim, s.num_classes) for s in sets)
    enc.requires_grad_(True)
    enc.train()
    params = list(enc.parameters()) + list(heads.parameters())
    opt = torch.optim.AdamW(params, lr=1e-3, weight_decay=0.01)
    losses = []
    for step in range(cfg.model.semantic_pretext_steps):
        total = 0.0
        opt.zero_grad()
        for k, (wav, y) in enumerate(zip(data, labels)):
            idx = torch.as_tensor(rng.choice(len(y), batch_per_task, replace=False))
            feats = enc(wav[idx])
            loss = F.cross_entropy(heads[k](feats.mean(1)), y[idx])
            loss.backward()
            total += loss.item()
        opt.step()
        losses.append(total / len(sets))
        if step % 100 == 0:
            log.info("semantic pretext step %d loss %.4f", step, losses[-1])
    model.freeze_semantic()
    return losses
