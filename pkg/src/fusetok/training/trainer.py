"""GAN training loop for the tokenizer's acoustic path and decoder."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from ..config import RunConfig
from ..dsp import Waveform
from ..model.checkpoint import read_checkpoint, tokenizer_payload, write_checkpoint
from ..model.frontend import LogMel
from ..model.pretrain import build_tokenizer
from ..model.tokenizer import Tokenizer
from .discriminator import MultiFrequencyDiscriminator
from .losses import adv_gen_loss, disc_loss, feature_matching_loss, mel_loss, semantic_loss

log = logging.getLogger(__name__)


class NumericError(RuntimeError):
    pass


@dataclass(frozen=True)
class GeneratorLossBreakdown:
    l_sem: float
    l_mel: float
    l_fm: float
    l_adv: float
    lambda_sem: float = 45.0
    lambda_mel: float = 45.0
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", self.weighted_total())

    def weighted_total(self) -> float:
        return self.lambda_sem * self.l_sem + self.lambda_mel * self.l_mel + self.l_fm + self.l_adv

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in asdict(self).values())


def lr_schedule(step: int, total_steps: int, lr_max: float = 5e-4, final_ratio: float = 0.1) -> float:
    """Cosine decay from ``lr_max`` at step 0 to ``final_ratio * lr_max`` at ``total_steps``."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    lr_min = final_ratio * lr_max
    return lr_min + 0.5 * (lr_max - lr_min) * (1 + math.cos(math.pi * step / total_steps))


@dataclass
class TrainState:
    config: RunConfig
    model: Tokenizer
    disc: MultiFrequencyDiscriminator
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer
    loss_mel: LogMel
    semantic_hash: str
    step: int = 0
    last_metrics: dict = field(default_factory=dict)
    metrics: "MetricsLog | None" = None


def new_state(cfg: RunConfig, model: Tokenizer | None = None) -> TrainState:
    cfg.validate()
    model = build_tokenizer(cfg) if model is None else model
    d = cfg.discriminator
    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed_for("discriminator-init"))
        disc = MultiFrequencyDiscriminator(d.fft_sizes, d.channels, d.num_feature_maps)
    o = cfg.optim
    opt_g = torch.optim.AdamW(model.trainable_parameters(), lr=o.lr, betas=o.betas, weight_decay=o.weight_decay)
    opt_d = torch.optim.AdamW(disc.parameters(), lr=o.lr, betas=o.betas, weight_decay=o.weight_decay)
    model.train()
    disc.train()
    return TrainState(cfg, model, disc, opt_g, opt_d, LogMel(cfg.mel("ac128")), model.semantic_hash())


def _generator_objective(x: torch.Tensor, state: TrainState, outputs=None):
    model, cfg = state.model, state.config
    z_sem, z_ac, _, y_hat = model(x) if outputs is None else outputs
    l_sem = semantic_loss(z_sem, z_ac)
    l_mel = mel_loss(state.loss_mel(x), state.loss_mel(y_hat))
    state.disc.requires_grad_(False)
    try:
        with torch.no_grad():
            real = state.disc(x)
        fake = state.disc(y_hat)
    finally:
        state.disc.requires_grad_(True)
    l_fm = feature_matching_loss([r[1] for r in real], [f[1] for f in fake])
    l_adv = adv_gen_loss([f[0] for f in fake], cfg.loss.adv_form)
    lam_sem, lam_mel = cfg.loss.lambda_sem, cfg.loss.lambda_mel
    total = lam_sem * l_sem + lam_mel * l_mel + l_fm + l_adv
    breakdown = GeneratorLossBreakdown(
        l_sem.item(), l_mel.item(), l_fm.item(), l_adv.item(), lambda_sem=lam_sem, lambda_mel=lam_mel
    )
    return breakdown, total


def generator_loss(x: torch.Tensor | Waveform, state: TrainState) -> GeneratorLossBreakdown:
    if isinstance(x, Waveform):
        x = torch.as_tensor(x.samples, dtype=torch.float32)[None]
    return _generator_objective(x, state)[0]


def _grad_norm(params) -> float:
    sq = 0.0
    for p in params:
        if p.grad is not None:
            sq += float(p.grad.detach().double().square().sum())
    return math.sqrt(sq)


def train_step(batch: torch.Tensor, state: TrainState) -> TrainState:
    """One discriminator update followed by one generator update."""
    cfg = state.config
    total_steps = cfg.optim.total_steps
    lr = lr_schedule(min(state.step, total_steps), total_steps, cfg.optim.lr, cfg.optim.final_lr_ratio)
    for opt in (state.opt_g, state.opt_d):
        for g in opt.param_groups:
            g["lr"] = lr

    outputs = state.model(batch)
    y_hat = outputs[3]

    real = state.disc(batch)
    fake = state.disc(y_hat.detach())
    l_d = disc_loss([r[0] for r in real], [f[0] for f in fake])
    if not torch.isfinite(l_d):
        raise NumericError(f"non-finite discriminator loss at step {state.step}: {l_d.item()}")
    state.opt_d.zero_grad(set_to_none=True)
    l_d.backward()
    state.opt_d.step()

    breakdown, total = _generator_objective(batch, state, outputs)
    if not (breakdown.is_finite() and torch.isfinite(total)):
        raise NumericError(f"non-finite generator loss at step {state.step}: {asdict(breakdown)}")
    state.opt_g.zero_grad(set_to_none=True)
    total.backward()
    sem_grad = _grad_norm(state.model.semantic.parameters())
    state.opt_g.step()

    state.step += 1
    state.last_metrics = {
        "step": state.step,
        "lr": lr,
        **{k: v for k, v in asdict(breakdown).items() if not k.startswith("lambda")},
        "l_disc": l_d.item(),
        "semantic_grad_norm": sem_grad,
    }
    return state


# ---------------------------------------------------------------------------
# data


class CropSampler:
    """Random equal-length crops from a fixed corpus, driven by one numpy Generator."""

    def __init__(self, corpus: Sequence[Waveform] | np.ndarray, crop_len: int, batch_size: int, rng: np.random.Generator):
        clips = [np.asarray(w.samples if isinstance(w, Waveform) else w, dtype=np.float32) for w in corpus]
        if not clips:
            raise ValueError("empty corpus")
        short = [len(c) for c in clips if len(c) < crop_len]
        if short:
            raise ValueError(f"{len(short)} clips shorter than the crop length {crop_len}")
        self.clips = clips
        self.crop_len = crop_len
        self.batch_size = batch_size
        self.rng = rng

    def __call__(self) -> torch.Tensor:
        idx = self.rng.integers(len(self.clips), size=self.batch_size)
        out = np.empty((self.batch_size, self.crop_len), dtype=np.float32)
        for i, k in enumerate(idx):
            start = self.rng.integers(len(self.clips[k]) - self.crop_len + 1)
            out[i] = self.clips[k][start : start + self.crop_len]
        return torch.from_numpy(out)

    def get_state(self) -> dict:
        return self.rng.bit_generator.state

    def set_state(self, state: dict) -> None:
        self.rng.bit_generator.state = state


def crop_length(cfg: RunConfig) -> int:
    """Crop length rounded to whole latent frames."""
    hop = cfg.hop_samples
    return max(1, round(cfg.optim.crop_seconds * cfg.model.sample_rate / hop)) * hop


# ---------------------------------------------------------------------------
# loop, logging, checkpoints


class MetricsLog:
    """Line-delimited JSON records: one header, then one record per logged step."""

    def __init__(self, path: str | Path | None, header: dict | None = None, append: bool = False):
        self.path = Path(path) if path else None
        self.records: list[dict] = []
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if not append:
                self.path.write_text("")
                if header is not None:
                    self._write({"type": "header", **header})

    def _write(self, rec: dict) -> None:
        with self.path.open("a") as f:
            f.write(json.dumps(rec) + "\n")

    def log(self, rec: dict) -> None:
        rec = {"type": "step", **rec}
        self.records.append(rec)
        if self.path:
            self._write(rec)


def log_header(cfg: RunConfig) -> dict:
    return {
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "preset": cfg.preset,
        "lr": cfg.optim.lr,
        "batch_size": cfg.optim.batch_size,
        "total_steps": cfg.optim.total_steps,
        "lambda_sem": cfg.loss.lambda_sem,
        "lambda_mel": cfg.loss.lambda_mel,
    }


def save_train_checkpoint(path: str | Path, state: TrainState, sampler: CropSampler | None = None) -> Path:
    payload = tokenizer_payload(state.model, state.config, state.step, kind="train")
    payload.update(
        discriminator=state.disc.state_dict(),
        opt_g=state.opt_g.state_dict(),
        opt_d=state.opt_d.state_dict(),
        sampler_rng=sampler.get_state() if sampler else None,
        torch_rng=torch.get_rng_state(),
    )
    return write_checkpoint(path, payload)


def load_train_checkpoint(path: str | Path) -> tuple[TrainState, dict]:
    blob = read_checkpoint(path)
    if blob.get("kind") != "train":
        raise ValueError(f"{path} is not a training checkpoint")
    cfg = RunConfig.from_dict(blob["config"])
    model = Tokenizer(cfg)
    model.load_state_dict(blob["model"])
    model.freeze_semantic()
    state = new_state(cfg, model)
    state.disc.load_state_dict(blob["discriminator"])
    state.opt_g.load_state_dict(blob["opt_g"])
    state.opt_d.load_state_dict(blob["opt_d"])
    state.step = blob["step"]
    return state, blob


def train(
    cfg: RunConfig,
    corpus: Sequence[Waveform],
    steps: int | None = None,
    *,
    state: TrainState | None = None,
    resume_from: str | Path | None = None,
    log_path: str | Path | None = None,
    checkpoint_path: str | Path | None = None,
    callback: Callable[[TrainState], None] | None = None,
) -> TrainState:
    """Run (or continue) training until ``steps`` total steps have been taken.

    ``steps`` defaults to ``cfg.optim.total_steps``. With ``resume_from`` the
    model, optimizers, step counter and data RNG are restored, so the
    continued run reproduces the uninterrupted one.
    """
    steps = cfg.optim.total_steps if steps is None else steps
    sampler = CropSampler(corpus, crop_length(cfg), cfg.optim.batch_size, cfg.rng("train-crops"))
    append = False
    if resume_from is not None:
        state, blob = load_train_checkpoint(resume_from)
        if state.config.hash() != cfg.hash():
            raise ValueError("checkpoint was trained with a different config")
        if blob.get("sampler_rng") is not None:
            sampler.set_state(blob["sampler_rng"])
        torch.set_rng_state(blob["torch_rng"])
        append = True
    elif state is None:
        state = new_state(cfg)
    metrics = MetricsLog(log_path, log_header(cfg), append=append)
    while state.step < steps:
        train_step(sampler(), state)
        if cfg.log_every and state.step % cfg.log_every == 0:
            metrics.log(state.last_metrics)
        if checkpoint_path and cfg.checkpoint_every and state.step % cfg.checkpoint_every == 0:
            save_train_checkpoint(checkpoint_path, state, sampler)
        if callback is not None:
            callback(state)
        if state.step % 500 == 0:
            log.info("step %d %s", state.step, state.last_metrics)
    if checkpoint_path:
        save_train_checkpoint(checkpoint_path, state, sampler)
    state.metrics = metrics
    return state
