"""Unified semantic + acoustic audio tokenizer: a frozen semantic encoder,
an additive mel-patch acoustic residual, and a ConvNeXt/ISTFT decoder,
with evaluation and downstream tooling."""

from .config import ConfigError, RunConfig, desk, paper, preset
from .dsp import DSPError, MelConfig, Waveform, load_wav, melspec, save_wav

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DSPError",
    "MelConfig",
    "RunConfig",
    "Waveform",
    "desk",
    "load_wav",
    "melspec",
    "paper",
    "preset",
    "save_wav",
]
