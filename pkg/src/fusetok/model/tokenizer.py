"""The tokenizer: frozen semantic encoder + injected acoustic residual + vocoder decoder."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..config import RunConfig
from ..dsp import MelConfig, Waveform
from .frontend import ISTFT, LogMel
from .layers import ConvNeXtBlock, patchify, sinusoidal_positions


class ModelError(ValueError):
    pass


class Role(str, enum.Enum):
    SEMANTIC = "semantic"
    ACOUSTIC = "acoustic"
    UNIFIED = "unified"


@dataclass(frozen=True)
class FeatureTensor:
    data: torch.Tensor  # (b, t, d)
    role: Role
    frame_rate: int = 25

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ModelError(f"feature tensor must be (b, t, d), got {tuple(self.data.shape)}")
        if not torch.isfinite(self.data).all():
            raise ModelError("feature tensor holds non-finite values")
        object.__setattr__(self, "role", Role(self.role))

    @property
    def shape(self):
        return tuple(self.data.shape)


def fuse(z_sem: FeatureTensor, z_ac: FeatureTensor) -> FeatureTensor:
    """Additive fusion of a semantic and an acoustic feature tensor."""
    if z_sem.role is not Role.SEMANTIC or z_ac.role is not Role.ACOUSTIC:
        raise ModelError(f"fuse expects (semantic, acoustic), got ({z_sem.role.value}, {z_ac.role.value})")
    if z_sem.shape != z_ac.shape:
        raise ModelError(f"shape mismatch: semantic {z_sem.shape} vs acoustic {z_ac.shape}")
    if z_sem.frame_rate != z_ac.frame_rate:
        raise ModelError(f"frame rate mismatch: {z_sem.frame_rate} vs {z_ac.frame_rate}")
    return FeatureTensor(z_sem.data + z_ac.data, Role.UNIFIED, z_sem.frame_rate)


def parameter_hash(module: nn.Module) -> str:
    """sha256 over every parameter and persistent buffer, in name order."""
    h = hashlib.sha256()
    for name, t in sorted(module.state_dict().items()):
        arr = t.detach().cpu().contiguous().numpy()
        h.update(name.encode())
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


# Fixed affine applied to log-mel before the semantic transformer when
# utterance normalization is off; log-mel of [-1, 1] audio with a 1e-5 floor
# sits roughly in [-11.5, 4].
_MEL_SHIFT, _MEL_SCALE = 4.0, 4.0


class SemanticEncoder(nn.Module):
    """Small transformer over 4-frame mel patches, emitting 25 Hz features.

    With ``cmvn`` each mel bin is normalized to zero mean and unit variance
    over the utterance first, as ASR-style encoders do; the features then
    carry no absolute level or channel colouring. A nonzero ``bottleneck``
    squeezes the transformer output through that many tanh units, keeping
    coarse content while dropping fine spectral detail.
    """

    def __init__(
        self,
        mel: MelConfig,
        dim: int,
        layers: int,
        heads: int,
        patch_frames: int = 4,
        cmvn: bool = True,
        bottleneck: int = 0,
    ):
        super().__init__()
        self.patch_frames = patch_frames
        self.cmvn = cmvn
        self.mel = LogMel(mel)
        self.patch = nn.Linear(mel.n_mels * patch_frames, dim)
        layer = nn.TransformerEncoderLayer(
            dim, heads, 4 * dim, dropout=0.0, activation="gelu", batch_first=True, norm_first=True
        )
        self.blocks = nn.TransformerEncoder(layer, layers, enable_nested_tensor=False)
        self.bottleneck = nn.Sequential(nn.Linear(dim, bottleneck), nn.Tanh(), nn.Linear(bottleneck, dim)) if bottleneck else None
        self.norm = nn.LayerNorm(dim)

    def normalize(self, logmel: torch.Tensor) -> tuple[torch.Tensor, float]:
        """Normalized log-mel and the value padded frames should take."""
        if self.cmvn:
            mu = logmel.mean(dim=1, keepdim=True)
            sd = torch.sqrt(logmel.var(dim=1, unbiased=False, keepdim=True) + 1e-4)
            return (logmel - mu) / sd, 0.0
        floor = (float(np.log(self.mel.cfg.log_floor)) + _MEL_SHIFT) / _MEL_SCALE
        return (logmel + _MEL_SHIFT) / _MEL_SCALE, floor

    def forward(self, wav: torch.Tensor) -> torch.Tensor:
        m, pad = self.normalize(self.mel(wav))
        p = patchify(m, self.patch_frames, pad)
        h = self.patch(p.flatten(2))
        h = h + sinusoidal_positions(h.shape[1], h.shape[2], h.dtype)
        h = self.blocks(h)
        if self.bottleneck is not None:
            h = self.bottleneck(h)
        return self.norm(h)


class AcousticEncoder(nn.Module):
    """Non-overlapping (n_mels x patch_frames) conv patch embedding followed by LayerNorm."""

    def __init__(self, mel: MelConfig, dim: int, patch_frames: int = 4):
        super().__init__()
        self.patch_frames = patch_frames
        self.mel = LogMel(mel)
        self.proj = nn.Conv2d(1, dim, kernel_size=(mel.n_mels, patch_frames), stride=(mel.n_mels, patch_frames))
        self.norm = nn.LayerNorm(dim)  # affine, identity at init

    def embed(self, logmel: torch.Tensor) -> torch.Tensor:
        # logmel: (B, T, M)
        rem = (-logmel.shape[1]) % self.patch_frames
        if rem:
            logmel = F.pad(logmel, (0, 0, 0, rem), value=float(np.log(self.mel.cfg.log_floor)))
        h = self.proj(logmel.transpose(1, 2).unsqueeze(1))  # (B, d, 1, t)
        return self.norm(h.squeeze(2).transpose(1, 2))

    def forward(self, wav: torch.Tensor) -> torch.Tensor:
        return self.embed(self.mel(wav))


class Decoder(nn.Module):
    """Transposed-conv upsampler (25 -> 50 Hz) feeding a Vocos-style ConvNeXt ISTFT vocoder."""

    def __init__(
        self,
        in_dim: int,
        dim: int,
        intermediate: int,
        layers: int,
        samples_per_frame: int,
        upsample: int = 2,
    ):
        super().__init__()
        self.in_dim = in_dim
        self.samples_per_frame = samples_per_frame
        hop = samples_per_frame // upsample
        self.upsample = nn.ConvTranspose1d(in_dim, dim, kernel_size=2 * upsample, stride=upsample, padding=upsample // 2)
        self.embed = nn.Conv1d(dim, dim, kernel_size=7, padding=3)
        self.norm = nn.LayerNorm(dim, eps=1e-6)
        self.blocks = nn.ModuleList(ConvNeXtBlock(dim, intermediate, 1.0 / layers) for _ in range(layers))
        self.final_norm = nn.LayerNorm(dim, eps=1e-6)
        self.fft_size = 4 * hop
        self.head = nn.Linear(dim, self.fft_size + 2)
        self.istft = ISTFT(self.fft_size, hop)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        # z: (B, t, d) -> (B, t * samples_per_frame)
        if z.shape[-1] != self.in_dim:
            raise ModelError(f"decoder expects dim {self.in_dim}, got {z.shape[-1]}")
        h = self.embed(self.upsample(z.transpose(1, 2)))
        h = self.norm(h.transpose(1, 2)).transpose(1, 2)
        for blk in self.blocks:
            h = blk(h)
        h = self.head(self.final_norm(h.transpose(1, 2))).transpose(1, 2)
        logmag, phase = h.chunk(2, dim=1)
        mag = torch.exp(logmag).clamp(max=1e2)
        spec = torch.polar(mag, phase)
        return self.istft(spec)


class Tokenizer(nn.Module):
    def __init__(self, cfg: RunConfig):
        super().__init__()
        cfg.validate()
        m = cfg.model
        self.sample_rate = m.sample_rate
        self.frame_rate = m.frame_rate
        self.dim = m.dim
        self.semantic = SemanticEncoder(
            cfg.mel(m.semantic_mel), m.dim, m.semantic_layers, m.semantic_heads, m.patch_frames,
            m.semantic_cmvn, m.semantic_bottleneck,
        )
        self.acoustic = AcousticEncoder(cfg.mel(m.acoustic_mel), m.dim, m.patch_frames)
        self.decoder = Decoder(m.dim, m.decoder_dim, m.decoder_intermediate, m.decoder_layers, cfg.hop_samples, m.upsample_factor)
        self.freeze_semantic()

    def freeze_semantic(self) -> None:
        self.semantic.requires_grad_(False)
        for p in self.semantic.parameters():
            p.grad = None  # drop leftovers from pretraining
        self.semantic.eval()

    def train(self, mode: bool = True):
        super().train(mode)
        self.semantic.eval()
        return self

    def trainable_parameters(self):
        return [p for n, p in self.named_parameters() if not n.startswith("semantic.")]

    def semantic_hash(self) -> str:
        return parameter_hash(self.semantic)

    @property
    def samples_per_frame(self) -> int:
        return self.sample_rate // self.frame_rate

    # -- tensor-level API --------------------------------------------------

    def semantic_features(self, wav: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return self.semantic(wav)

    def acoustic_features(self, wav: torch.Tensor) -> torch.Tensor:
        return self.acoustic(wav)

    def forward(self, wav: torch.Tensor):
        """(B, N) waveform -> (z_sem, z_ac, z, reconstruction)."""
        z_sem = self.semantic_features(wav)
        z_ac = self.acoustic_features(wav)
        z = z_sem + z_ac
        return z_sem, z_ac, z, self.decoder(z)

    # -- Waveform-level API ------------------------------------------------

    def _batch(self, w: Waveform) -> torch.Tensor:
        if w.sample_rate != self.sample_rate:
            raise ModelError(f"expected {self.sample_rate} Hz audio, got {w.sample_rate} Hz")
        if len(w) == 0:
            raise ModelError("empty waveform")
        p = next(self.parameters())
        return torch.as_tensor(w.samples, dtype=p.dtype)[None]

    def encode_semantic(self, w: Waveform) -> FeatureTensor:
        return FeatureTensor(self.semantic_features(self._batch(w)), Role.SEMANTIC, self.frame_rate)

    def encode_acoustic(self, w: Waveform) -> FeatureTensor:
        return FeatureTensor(self.acoustic_features(self._batch(w)), Role.ACOUSTIC, self.frame_rate)

    def tokenize(self, w: Waveform) -> tuple[FeatureTensor, FeatureTensor, FeatureTensor]:
        z_sem = self.encode_semantic(w)
        z_ac = self.encode_acoustic(w)
        return z_sem, z_ac, fuse(z_sem, z_ac)

    def decode(self, z: FeatureTensor) -> Waveform:
        """Decode a single-item feature tensor of any role to a waveform."""
        if z.data.shape[0] != 1:
            raise ModelError("decode takes a batch of one; use decoder(...) for batches")
        y = self.decoder(z.data)
        return Waveform(y[0].detach().cpu().double().numpy(), self.sample_rate)
