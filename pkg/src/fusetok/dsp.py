"""Numpy signal-processing frontend: resampling, STFT/ISTFT, log-mel.

Every function here is pure. Torch mirrors of the mel frontend live in
:mod:`fusetok.model.frontend` and are checked against these.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import signal
from scipy.io import wavfile


class DSPError(ValueError):
    pass


@dataclass(frozen=True)
class Waveform:
    """Mono audio in [-1, 1] with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise DSPError(f"waveform must be 1-D, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DSPError("waveform contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise DSPError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def normalized(self, peak: float = 1.0) -> "Waveform":
        """Scale down so that max |sample| <= peak. Quiet signals are left alone."""
        m = np.max(np.abs(self.samples)) if len(self) else 0.0
        if m <= peak:
            return self
        return Waveform(self.samples * (peak / m), self.sample_rate)


@dataclass(frozen=True)
class MelConfig:
    name: str
    n_mels: int
    sample_rate: int = 16000
    fft_size: int = 1024
    hop: int = 160
    window: str = "hann"
    fmin: float = 0.0
    fmax: float | None = None  # None -> Nyquist
    log_floor: float = 1e-5

    @property
    def hop_ms(self) -> float:
        return 1000.0 * self.hop / self.sample_rate

    @property
    def f_max(self) -> float:
        return self.sample_rate / 2 if self.fmax is None else float(self.fmax)


SEM64 = MelConfig(name="sem64", n_mels=64)
AC128 = MelConfig(name="ac128", n_mels=128)
MEL_PRESETS = {c.name: c for c in (SEM64, AC128)}


@dataclass(frozen=True)
class ComplexSpectrogram:
    frames: np.ndarray  # (t_frames, fft_size // 2 + 1), complex
    fft_size: int
    hop: int
    window: str
    sample_rate: int
    length: int | None = None  # source signal length, used to trim istft output
    center: bool = True


@dataclass(frozen=True)
class MelSpectrogram:
    frames: np.ndarray  # (t_mel, n_mels), natural-log magnitude
    config: MelConfig = field(repr=False)

    @property
    def bins(self) -> int:
        return self.frames.shape[1]

    @property
    def hop_ms(self) -> float:
        return self.config.hop_ms


# ---------------------------------------------------------------------------
# resampling


def resample(w: Waveform, target_sr: int) -> Waveform:
    """Polyphase windowed-sinc resampling to ``target_sr``."""
    if len(w) == 0:
        raise DSPError("cannot resample an empty waveform")
    if target_sr <= 0:
        raise DSPError(f"target sample rate must be positive, got {target_sr}")
    if target_sr == w.sample_rate:
        return Waveform(w.samples.copy(), w.sample_rate)
    ratio = Fraction(int(target_sr), w.sample_rate)
    y = signal.resample_poly(w.samples, ratio.numerator, ratio.denominator, window=("kaiser", 5.0))
    return Waveform(y, target_sr)


# ---------------------------------------------------------------------------
# STFT


def get_window(name: str, size: int) -> np.ndarray:
    # periodic windows, the convention for spectral analysis
    return signal.get_window(name, size, fftbins=True).astype(np.float64)


def frame_count(length: int, fft_size: int, hop: int, center: bool = True) -> int:
    pad_total = 2 * (fft_size // 2) if center else 0
    return (length + pad_total - fft_size) // hop + 1


def _check_stft_args(fft_size: int, hop: int) -> None:
    if fft_size <= 0 or fft_size & (fft_size - 1):
        raise DSPError(f"fft_size must be a power of two, got {fft_size}")
    if not 0 < hop <= fft_size:
        raise DSPError(f"hop must satisfy 0 < hop <= fft_size, got hop={hop}, fft_size={fft_size}")


def _pad_center(x: np.ndarray, pad: int) -> np.ndarray:
    # reflect padding needs more than `pad` samples; fall back to zeros for tiny inputs
    mode = "reflect" if x.shape[-1] > pad else "constant"
    widths = [(0, 0)] * (x.ndim - 1) + [(pad, pad)]
    return np.pad(x, widths, mode=mode)


def stft(
    w: Waveform,
    fft_size: int = 1024,
    hop: int = 256,
    window: str = "hann",
    center: bool = True,
) -> ComplexSpectrogram:
    """Unnormalized short-time Fourier transform.

    With ``center=True`` the signal is reflect-padded by ``fft_size // 2`` on
    both sides so frame ``i`` is centred on sample ``i * hop``.
    """
    _check_stft_args(fft_size, hop)
    if len(w) == 0:
        raise DSPError("cannot transform an empty waveform")
    x = w.samples
    if center:
        x = _pad_center(x, fft_size // 2)
    if x.shape[0] < fft_size:
        x = np.pad(x, (0, fft_size - x.shape[0]))
    frames = np.lib.stride_tricks.sliding_window_view(x, fft_size)[::hop]
    spec = np.fft.rfft(frames * get_window(window, fft_size), axis=-1)
    return ComplexSpectrogram(spec, fft_size, hop, window, w.sample_rate, len(w), center)


def istft(s: ComplexSpectrogram) -> Waveform:
    """Weighted overlap-add inverse of :func:`stft`.

    Raises:
        DSPError: if the analysis window is not COLA at the spectrogram's hop.
    """
    n, hop = s.fft_size, s.hop
    win = get_window(s.window, n)
    if not signal.check_COLA(win, n, n - hop):
        raise DSPError(f"window {s.window!r} is not COLA at fft_size={n}, hop={hop}")
    t = s.frames.shape[0]
    frames = np.fft.irfft(s.frames, n=n, axis=-1) * win
    out_len = (t - 1) * hop + n
    y = np.zeros(out_len)
    env = np.zeros(out_len)
    wsq = win**2
    for i in range(t):
        y[i * hop : i * hop + n] += frames[i]
        env[i * hop : i * hop + n] += wsq
    nz = env > 1e-11
    y[nz] /= env[nz]
    if s.center:
        y = y[n // 2 :]
    if s.length is not None:
        y = y[: s.length]
        if y.shape[0] < s.length:
            y = np.pad(y, (0, s.length - y.shape[0]))
    return Waveform(y, s.sample_rate)


# ---------------------------------------------------------------------------
# mel


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_edges(cfg: MelConfig) -> np.ndarray:
    """The ``n_mels + 2`` triangle edge frequencies in Hz; centres are ``[1:-1]``."""
    return mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.f_max), cfg.n_mels + 2))


def mel_center_frequencies(cfg: MelConfig) -> np.ndarray:
    return mel_edges(cfg)[1:-1]


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Triangular filters with unit peak, shape ``(n_mels, fft_size // 2 + 1)``."""
    if cfg.f_max > cfg.sample_rate / 2:
        raise DSPError(f"fmax {cfg.f_max} above Nyquist {cfg.sample_rate / 2}")
    if cfg.fmin < 0 or cfg.fmin >= cfg.f_max:
        raise DSPError(f"invalid band [{cfg.fmin}, {cfg.f_max}]")
    freqs = np.fft.rfftfreq(cfg.fft_size, d=1.0 / cfg.sample_rate)
    edges = mel_edges(cfg)
    lower = (freqs[None, :] - edges[:-2, None]) / np.diff(edges)[:-1, None]
    upper = (edges[2:, None] - freqs[None, :]) / np.diff(edges)[1:, None]
    return np.maximum(0.0, np.minimum(lower, upper))


def mel_frame_count(num_samples: int, hop: int) -> int:
    return math.ceil(num_samples / hop)


def melspec(w: Waveform, cfg: MelConfig = AC128) -> MelSpectrogram:
    """Log-mel magnitude spectrogram with ``ceil(len / hop)`` frames."""
    if w.sample_rate != cfg.sample_rate:
        raise DSPError(f"waveform rate {w.sample_rate} does not match mel config rate {cfg.sample_rate}")
    fb = mel_filterbank(cfg)
    spec = stft(w, cfg.fft_size, cfg.hop, cfg.window, center=True)
    t = mel_frame_count(len(w), cfg.hop)
    mag = np.abs(spec.frames[:t])
    mel = mag @ fb.T
    return MelSpectrogram(np.log(np.maximum(mel, cfg.log_floor)), cfg)


# ---------------------------------------------------------------------------
# WAV io


def load_wav(path: str | Path) -> Waveform:
    """Read 16-bit PCM or 32-bit float WAV; multichannel input is averaged to mono."""
    sr, data = wavfile.read(str(path))
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise DSPError(f"unsupported WAV sample type {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    return Waveform(x, sr)


def save_wav(path: str | Path, w: Waveform, subtype: str = "float32") -> None:
    x = np.clip(w.samples, -1.0, 1.0)
    if subtype == "pcm16":
        data = np.round(x * 32767.0).astype(np.int16)
    elif subtype == "float32":
        data = x.astype(np.float32)
    else:
        raise DSPError(f"unknown WAV subtype {subtype!r}")
    wavfile.write(str(path), w.sample_rate, data)
