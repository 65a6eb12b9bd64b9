"""Three-way comparison of semantic-only, acoustic-only and unified features.

Each role gets a row with linear-probe accuracy on every probe task and a
reconstruction report from decoding that role's features directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .. import synth
from ..config import DistanceConfig, RunConfig
from ..dsp import Waveform
from .distances import ReconReport, recon_report
from .probe import ProbeResult, holdout_split, linear_probe

ROLES = ("semantic", "acoustic", "unified")


@dataclass
class AblationData:
    probe_sets: dict  # task -> synth.LabelledSet
    recon: list[Waveform]


@dataclass
class AblationRow:
    role: str
    probes: dict[str, ProbeResult] = field(default_factory=dict)
    recon: ReconReport | None = None

    def to_record(self) -> dict:
        rec = {"role": self.role}
        rec.update({f"probe/{t}": r.score for t, r in self.probes.items()})
        if self.recon is not None:
            rec.update({f"recon/{k}": v for k, v in self.recon.to_record().items()})
        return rec


def ablation_dataset(
    cfg: RunConfig,
    clips_per_task: int = 160,
    recon_clips: int = 20,
    seconds: float = 1.0,
    recon_seconds: float = 1.28,
) -> AblationData:
    """Held-out probe sets and reconstruction clips from their own seed streams."""
    sets = {t: synth.probe_task(t, clips_per_task, cfg.rng(f"ablation-probe-{t}"), seconds) for t in synth.PROBE_TASKS}
    recon = synth.training_corpus(recon_clips, cfg.rng("ablation-recon"), recon_seconds)
    return AblationData(sets, recon)


@torch.no_grad()
def role_features(model, waves: list[Waveform], batch_size: int = 32) -> dict[str, np.ndarray]:
    """(n, t, d) features per role; all clips must share one length."""
    model.eval()
    out = {r: [] for r in ROLES}
    for i in range(0, len(waves), batch_size):
        x = torch.tensor(np.stack([w.samples for w in waves[i : i + batch_size]]), dtype=torch.float32)
        z_sem = model.semantic_features(x)
        z_ac = model.acoustic_features(x)
        for role, z in zip(ROLES, (z_sem, z_ac, z_sem + z_ac)):
            out[role].append(z.numpy())
    return {r: np.concatenate(v) for r, v in out.items()}


@torch.no_grad()
def role_reconstructions(model, waves: list[Waveform]) -> dict[str, list[Waveform]]:
    model.eval()
    feats = role_features(model, waves)
    recs = {}
    for role, z in feats.items():
        y = model.decoder(torch.from_numpy(z)).double().numpy()
        recs[role] = [Waveform(row, w.sample_rate) for row, w in zip(y, waves)]
    return recs


def ablation_report(
    model,
    dataset: AblationData,
    dist_cfg: DistanceConfig = DistanceConfig(),
    seed: int = 0,
    test_fraction: float = 0.3,
) -> list[AblationRow]:
    """One row per role in the order semantic, acoustic, unified."""
    rows = {r: AblationRow(r) for r in ROLES}
    for task, ls in dataset.probe_sets.items():
        feats = role_features(model, ls.waves)
        split = holdout_split(len(ls.labels), test_fraction, seed)
        for role in ROLES:
            rows[role].probes[task] = linear_probe(feats[role], ls.labels, split, task, role, seed=seed)
    recs = role_reconstructions(model, dataset.recon)
    ids = [f"{i:04d}" for i in range(len(dataset.recon))]
    for role in ROLES:
        rows[role].recon = recon_report(dataset.recon, recs[role], dist_cfg, ids)
    return [rows[r] for r in ROLES]


def format_table(rows: list[AblationRow]) -> str:
    recs = [r.to_record() for r in rows]
    cols = list(recs[0])
    width = [max(len(c), 8) for c in cols]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, width))]
    for rec in recs:
        cells = [f"{v:.3f}" if isinstance(v, float) else str(v) for v in rec.values()]
        lines.append("  ".join(c.ljust(w) for c, w in zip(cells, width)))
    return "\n".join(lines)
