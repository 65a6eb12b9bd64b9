"""Run configuration: nested dataclasses, YAML round trip, named presets."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import yaml

from .dsp import AC128, SEM64, MelConfig


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    sample_rate: int = 16000
    frame_rate: int = 25
    dim: int = 64
    patch_frames: int = 4
    semantic_mel: str = "sem64"
    acoustic_mel: str = "ac128"
    semantic_layers: int = 2
    semantic_heads: int = 4
    # "pretext": briefly trained on synthetic attribute tasks; "random": seeded init
    semantic_preset: str = "pretext"
    semantic_pretext_steps: int = 300
    # per-utterance mean/variance normalization of the semantic encoder's mel input
    semantic_cmvn: bool = True
    # width of the semantic output bottleneck; 0 disables it
    semantic_bottleneck: int = 8
    decoder_dim: int = 128
    decoder_intermediate: int = 384
    decoder_layers: int = 4
    upsample_factor: int = 2


@dataclass
class LossConfig:
    lambda_sem: float = 45.0
    lambda_mel: float = 45.0
    # "hinge": -mean(D(fake)); "hinge_margin": mean(relu(1 - D(fake)))
    adv_form: str = "hinge"


@dataclass
class DiscriminatorConfig:
    fft_sizes: tuple[int, ...] = (512, 1024, 2048)
    channels: int = 8
    num_feature_maps: int = 4


@dataclass
class OptimConfig:
    lr: float = 5e-4
    final_lr_ratio: float = 0.1
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    total_steps: int = 5000
    batch_size: int = 4
    crop_seconds: float = 0.64


@dataclass
class DataConfig:
    corpus_clips: int = 120
    clip_seconds: float = 2.0


@dataclass
class DistanceConfig:
    mel_windows: tuple[int, ...] = (32, 64, 128, 256, 512, 1024, 2048)
    mel_bins: tuple[int, ...] = (5, 10, 20, 40, 80, 160, 320)
    stft_windows: tuple[int, ...] = (512, 1024, 2048)
    clamp: float = 1e-5


@dataclass
class DenoiserConfig:
    layers: int = 3
    heads: int = 4
    lr: float = 1e-3
    steps: int = 4000
    batch_size: int = 64
    snr_db: float = 5.0
    train_pairs: int = 2048
    # share of extra clean -> clean pairs, so clean input passes through unharmed
    clean_fraction: float = 0.25


@dataclass
class FlowConfig:
    width: int = 96
    depth: int = 3
    heads: int = 4
    num_classes: int = 4
    cond_dropout: float = 0.1
    lr: float = 1e-3
    steps: int = 2000
    batch_size: int = 32
    sample_steps: int = 25
    cfg_scale: float = 5.0


@dataclass
class RunConfig:
    preset: str = "desk"
    seed: int = 0
    mels: dict[str, MelConfig] = field(default_factory=lambda: {"sem64": SEM64, "ac128": AC128})
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    data: DataConfig = field(default_factory=DataConfig)
    distances: DistanceConfig = field(default_factory=DistanceConfig)
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    log_every: int = 1
    checkpoint_every: int = 0

    def mel(self, name: str) -> MelConfig:
        try:
            return self.mels[name]
        except KeyError:
            raise ConfigError(f"unknown mel preset {name!r}; have {sorted(self.mels)}") from None

    @property
    def hop_samples(self) -> int:
        """Waveform samples per latent frame (640 at 16 kHz / 25 Hz)."""
        return self.model.sample_rate // self.model.frame_rate

    def validate(self) -> "RunConfig":
        m = self.model
        if m.sample_rate % m.frame_rate:
            raise ConfigError("sample_rate must be a multiple of frame_rate")
        for name in (m.semantic_mel, m.acoustic_mel):
            mc = self.mel(name)
            if mc.sample_rate != m.sample_rate:
                raise ConfigError(f"mel preset {name} runs at {mc.sample_rate} Hz, model at {m.sample_rate}")
            if mc.hop * m.patch_frames != self.hop_samples:
                raise ConfigError(f"mel preset {name}: hop x patch_frames must equal one latent frame")
        if m.dim % m.semantic_heads:
            raise ConfigError("dim must be divisible by semantic_heads")
        if m.semantic_bottleneck < 0:
            raise ConfigError("semantic_bottleneck must be >= 0")
        if len(self.discriminator.fft_sizes) < 2:
            raise ConfigError("discriminator needs at least two resolutions")
        if self.loss.adv_form not in ("hinge", "hinge_margin"):
            raise ConfigError(f"unknown adversarial form {self.loss.adv_form!r}")
        if self.optim.total_steps <= 0 or self.optim.batch_size <= 0:
            raise ConfigError("total_steps and batch_size must be positive")
        if self.flow.width % self.flow.heads:
            raise ConfigError("flow width must be divisible by flow heads")
        if not 0 <= self.denoiser.clean_fraction <= 1:
            raise ConfigError("denoiser clean_fraction must lie in [0, 1]")
        if not 0 <= self.flow.cond_dropout < 1:
            raise ConfigError("flow cond_dropout must lie in [0, 1)")
        return self

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return _to_plain(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return _from_plain(cls, d)

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        try:
            d = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config text does not hold a mapping")
        return cls.from_dict(d)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.loads(Path(path).read_text())

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    # -- randomness --------------------------------------------------------

    def seed_for(self, stream: str) -> int:
        return substream_seed(self.seed, stream)

    def rng(self, stream: str) -> np.random.Generator:
        return np.random.default_rng(self.seed_for(stream))

    def torch_generator(self, stream: str) -> torch.Generator:
        return torch.Generator().manual_seed(self.seed_for(stream))


def substream_seed(seed: int, stream: str) -> int:
    """Derive an independent 63-bit seed for a named substream."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(stream.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (tuple, list)):
        return [_to_plain(v) for v in obj]
    return obj


def _from_plain(tp, value):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"expected a mapping for {tp.__name__}, got {type(value).__name__}")
        hints = typing.get_type_hints(tp)
        names = {f.name for f in dataclasses.fields(tp)}
        unknown = set(value) - names
        if unknown:
            raise ConfigError(f"unknown keys for {tp.__name__}: {sorted(unknown)}")
        return tp(**{k: _from_plain(hints[k], v) for k, v in value.items()})
    if origin is dict:
        _, vt = typing.get_args(tp)
        return {k: _from_plain(vt, v) for k, v in value.items()}
    if origin is tuple:
        args = typing.get_args(tp)
        et = args[0]
        return tuple(_from_plain(et, v) for v in value)
    if origin in (typing.Union, getattr(__import__("types"), "UnionType", None)):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return None if value is None else _from_plain(args[0], value)
    if tp is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def desk() -> RunConfig:
    return RunConfig().validate()


def paper() -> RunConfig:
    """Full-scale hyperparameters, kept for documentation; not runnable on a desk."""
    cfg = RunConfig(preset="paper")
    cfg.model = ModelConfig(
        dim=1280,
        semantic_layers=32,
        semantic_heads=20,
        decoder_dim=1280,
        decoder_intermediate=3840,
        decoder_layers=12,
        # a genuinely pretrained encoder already discards fine acoustic detail
        semantic_cmvn=False,
        semantic_bottleneck=0,
    )
    cfg.optim = OptimConfig(total_steps=1_000_000, batch_size=256)
    cfg.flow = FlowConfig(width=1532, depth=11, heads=4, steps=200_000, batch_size=192)
    return cfg.validate()


PRESETS = {"desk": desk, "paper": paper}


def preset(name: str) -> RunConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
