"""Generator and discriminator objectives."""

from __future__ import annotations

from typing import Sequence

import torch
import torch.nn.functional as F

from ..dsp import AC128, Waveform, melspec


class LossError(ValueError):
    pass


def semantic_loss(z_sem: torch.Tensor, z_ac: torch.Tensor) -> torch.Tensor:
    """Mean squared difference between semantic and acoustic features.

    The semantic side is a constant target: it comes out of a frozen encoder,
    so the only gradient path is through ``z_ac``.
    """
    if z_sem.shape != z_ac.shape:
        raise LossError(f"shape mismatch: {tuple(z_sem.shape)} vs {tuple(z_ac.shape)}")
    return (z_sem.detach() - z_ac).square().mean()


def mel_loss(ref_logmel, est_logmel) -> torch.Tensor:
    """L1 between two log-mel tensors of the same shape.

    Two Waveforms are accepted as well; they are turned into ``ac128``
    log-mels first.
    """
    if isinstance(ref_logmel, Waveform) or isinstance(est_logmel, Waveform):
        ref_logmel, est_logmel = _waveform_logmels(ref_logmel, est_logmel)
    if ref_logmel.shape != est_logmel.shape:
        raise LossError(f"shape mismatch: {tuple(ref_logmel.shape)} vs {tuple(est_logmel.shape)}")
    return (ref_logmel - est_logmel).abs().mean()


def _waveform_logmels(ref: Waveform, est: Waveform):
    if not (isinstance(ref, Waveform) and isinstance(est, Waveform)):
        raise LossError("pass two Waveforms or two log-mel tensors")
    if ref.sample_rate != est.sample_rate or ref.sample_rate != AC128.sample_rate:
        raise LossError(f"sample rates must both be {AC128.sample_rate}: {ref.sample_rate}, {est.sample_rate}")
    if len(ref) != len(est):
        raise LossError(f"length mismatch: {len(ref)} vs {len(est)}")
    return torch.from_numpy(melspec(ref, AC128).frames), torch.from_numpy(melspec(est, AC128).frames)


def disc_loss(real_logits: Sequence[torch.Tensor], fake_logits: Sequence[torch.Tensor]) -> torch.Tensor:
    """Hinge loss averaged over resolutions."""
    if len(real_logits) != len(fake_logits):
        raise LossError("real/fake logit lists differ in length")
    terms = []
    for r, f in zip(real_logits, fake_logits):
        if r.shape != f.shape:
            raise LossError(f"logit shape mismatch {tuple(r.shape)} vs {tuple(f.shape)}")
        terms.append(F.relu(1 - r).mean() + F.relu(1 + f).mean())
    return torch.stack(terms).mean()


def adv_gen_loss(fake_logits: Sequence[torch.Tensor], form: str = "hinge") -> torch.Tensor:
    if form == "hinge":
        terms = [-f.mean() for f in fake_logits]
    elif form == "hinge_margin":
        terms = [F.relu(1 - f).mean() for f in fake_logits]
    else:
        raise LossError(f"unknown adversarial form {form!r}")
    return torch.stack(terms).mean()


def feature_matching_loss(
    real_feats: Sequence[Sequence[torch.Tensor]], fake_feats: Sequence[Sequence[torch.Tensor]]
) -> torch.Tensor:
    """Mean L1 over every (resolution, layer) feature map; real maps are constants."""
    if len(real_feats) != len(fake_feats):
        raise LossError("feature lists differ in number of resolutions")
    terms = []
    for rs, fs in zip(real_feats, fake_feats):
        if len(rs) != len(fs):
            raise LossError("feature lists differ in number of layers")
        for r, f in zip(rs, fs):
            if r.shape != f.shape:
                raise LossError(f"feature shape mismatch {tuple(r.shape)} vs {tuple(f.shape)}")
            terms.append((r.detach() - f).abs().mean())
    return torch.stack(terms).mean()
