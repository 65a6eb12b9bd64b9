"""Multi-scale mel and STFT reconstruction distances (log10 magnitude, L1)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..config import DistanceConfig
from ..dsp import MelConfig, Waveform, mel_filterbank, stft


log = logging.getLogger(__name__)


class MetricError(ValueError):
    pass


def _check_pair(ref: Waveform, est: Waveform) -> None:
    if ref.sample_rate != est.sample_rate:
        raise MetricError(f"sample rates differ: {ref.sample_rate} vs {est.sample_rate}")
    if len(ref) != len(est):
        raise MetricError(f"lengths differ: {len(ref)} vs {len(est)}")
    if len(ref) == 0:
        raise MetricError("empty waveform")


def _log_mag(w: Waveform, window: int, clamp: float) -> np.ndarray:
    return np.log10(np.maximum(np.abs(stft(w, window, window // 4).frames), clamp))


def _log_mel(w: Waveform, window: int, n_mels: int, clamp: float) -> np.ndarray:
    cfg = MelConfig(name=f"dist{window}", n_mels=n_mels, sample_rate=w.sample_rate, fft_size=window, hop=window // 4)
    mel = np.abs(stft(w, window, window // 4).frames) @ mel_filterbank(cfg).T
    return np.log10(np.maximum(mel, clamp))


def mel_distance_per_scale(ref: Waveform, est: Waveform, cfg: DistanceConfig = DistanceConfig()) -> list[float]:
    _check_pair(ref, est)
    return [
        float(np.mean(np.abs(_log_mel(ref, n, m, cfg.clamp) - _log_mel(est, n, m, cfg.clamp))))
        for n, m in zip(cfg.mel_windows, cfg.mel_bins)
    ]


def mel_distance(ref: Waveform, est: Waveform, cfg: DistanceConfig = DistanceConfig()) -> float:
    """Mean over window sizes of the L1 distance between log10 mel spectrograms."""
    return float(np.mean(mel_distance_per_scale(ref, est, cfg)))


def stft_distance(ref: Waveform, est: Waveform, cfg: DistanceConfig = DistanceConfig()) -> float:
    """Mean over window sizes of the L1 distance between log10 STFT magnitudes."""
    _check_pair(ref, est)
    return float(
        np.mean(
            [np.mean(np.abs(_log_mag(ref, n, cfg.clamp) - _log_mag(est, n, cfg.clamp))) for n in cfg.stft_windows]
        )
    )


@dataclass
class ReconReport:
    mel_distance: float
    stft_distance: float
    stoi: float
    per_file: list[dict] = field(default_factory=list)

    def to_record(self) -> dict:
        return {"mel_distance": self.mel_distance, "stft_distance": self.stft_distance, "stoi": self.stoi}


def recon_report(
    refs: list[Waveform],
    ests: list[Waveform],
    cfg: DistanceConfig = DistanceConfig(),
    ids: list[str] | None = None,
) -> ReconReport:
    """Average the three reconstruction metrics over paired files.

    STOI is undefined for clips with under ~0.4 s of active signal; such
    files carry ``stoi = None`` and the average skips them.
    """
    from .stoi import stoi

    if len(refs) != len(ests) or not refs:
        raise MetricError("need equally many, and at least one, reference and estimate")
    ids = ids or [str(i) for i in range(len(refs))]
    rows = []
    for i, r, e in zip(ids, refs, ests):
        try:
            s = stoi(r, e)
        except MetricError as exc:
            log.info("%s: no STOI (%s)", i, exc)
            s = None
        rows.append({"id": i, "mel_distance": mel_distance(r, e, cfg), "stft_distance": stft_distance(r, e, cfg), "stoi": s})
    rows.sort(key=lambda row: row["id"])
    scored = [row["stoi"] for row in rows if row["stoi"] is not None]
    return ReconReport(
        float(np.mean([row["mel_distance"] for row in rows])),
        float(np.mean([row["stft_distance"] for row in rows])),
        float(np.mean(scored)) if scored else float("nan"),
        rows,
    )
