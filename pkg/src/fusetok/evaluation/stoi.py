"""Classic (non-extended) short-time objective intelligibility.

Both signals are resampled to 10 kHz, frames more than 40 dB below the
loudest clean frame are dropped from both, and the remaining audio is
analysed in 15 one-third-octave bands from 150 Hz. Short-time envelopes of
30 frames (384 ms) are compared by a clipped, normalized correlation and
averaged over bands and segments.
"""

from __future__ import annotations

import numpy as np

from ..dsp import Waveform, resample
from .distances import MetricError

FS = 10000
FRAME = 256
HOP = 128
NFFT = 512
NUM_BANDS = 15
MIN_FREQ = 150.0
SEGMENT = 30
BETA_DB = -15.0
DYN_RANGE_DB = 40.0
_EPS = np.finfo(np.float64).eps
_TINY = np.finfo(np.float64).tiny


def third_octave_bands(fs: int = FS, nfft: int = NFFT, num_bands: int = NUM_BANDS, min_freq: float = MIN_FREQ):
    """0/1 matrix (num_bands, nfft // 2 + 1) mapping FFT bins to 1/3-octave bands, and the centre frequencies."""
    freqs = np.linspace(0, fs, nfft + 1)[: nfft // 2 + 1]
    k = np.arange(num_bands)
    centres = min_freq * 2.0 ** (k / 3)
    lo = min_freq * np.sqrt(2.0 ** (k / 3) * 2.0 ** ((k - 1) / 3))
    hi = min_freq * np.sqrt(2.0 ** (k / 3) * 2.0 ** ((k + 1) / 3))
    bands = np.zeros((num_bands, freqs.shape[0]))
    for i in range(num_bands):
        a = int(np.argmin(np.abs(freqs - lo[i])))
        b = int(np.argmin(np.abs(freqs - hi[i])))
        bands[i, a:b] = 1.0
    return bands, centres


def _analysis_window() -> np.ndarray:
    # symmetric Hann without the zero end-points (MATLAB ``hanning``)
    return np.hanning(FRAME + 2)[1:-1]


def _frame_starts(n: int) -> np.ndarray:
    return np.arange(0, n - FRAME, HOP)


def _drop_silent_frames(x: np.ndarray, y: np.ndarray):
    w = _analysis_window()
    starts = _frame_starts(x.shape[0])
    xf = np.stack([w * x[s : s + FRAME] for s in starts])
    yf = np.stack([w * y[s : s + FRAME] for s in starts])
    energy = 20 * np.log10(np.linalg.norm(xf, axis=1) / np.sqrt(FRAME) + _EPS)
    keep = energy > energy.max() - DYN_RANGE_DB
    xf, yf = xf[keep], yf[keep]
    out_len = (xf.shape[0] - 1) * HOP + FRAME
    xs, ys = np.zeros(out_len), np.zeros(out_len)
    for i in range(xf.shape[0]):
        xs[i * HOP : i * HOP + FRAME] += xf[i]
        ys[i * HOP : i * HOP + FRAME] += yf[i]
    return xs, ys


def _band_envelopes(x: np.ndarray, bands: np.ndarray) -> np.ndarray:
    w = _analysis_window()
    frames = np.stack([w * x[s : s + FRAME] for s in _frame_starts(x.shape[0])])
    spec = np.fft.rfft(frames, n=NFFT, axis=1)
    return np.sqrt(np.abs(spec) ** 2 @ bands.T).T  # (bands, frames)


def stoi(ref: Waveform, est: Waveform) -> float:
    """Intelligibility of ``est`` against clean ``ref``; about 1 for identical signals."""
    if len(ref) != len(est):
        raise MetricError(f"lengths differ: {len(ref)} vs {len(est)}")
    if ref.sample_rate != est.sample_rate:
        raise MetricError("sample rates differ")
    x = resample(ref, FS).samples if ref.sample_rate != FS else ref.samples
    y = resample(est, FS).samples if est.sample_rate != FS else est.samples
    if x.shape[0] < FRAME * 2 or not np.any(x):
        raise MetricError("reference too short or silent for STOI")
    x, y = _drop_silent_frames(x, y)
    bands, _ = third_octave_bands()
    X = _band_envelopes(x, bands)
    Y = _band_envelopes(y, bands)
    if X.shape[1] < SEGMENT:
        raise MetricError(
            f"only {X.shape[1]} non-silent frames; STOI needs at least {SEGMENT} (about 0.4 s of active signal)"
        )
    clip = 1 + 10 ** (-BETA_DB / 20)
    # (segments, bands, SEGMENT)
    xs = np.lib.stride_tricks.sliding_window_view(X, SEGMENT, axis=1).transpose(1, 0, 2)
    ys = np.lib.stride_tricks.sliding_window_view(Y, SEGMENT, axis=1).transpose(1, 0, 2)
    alpha = np.linalg.norm(xs, axis=2, keepdims=True) / np.maximum(np.linalg.norm(ys, axis=2, keepdims=True), _TINY)
    yp = np.minimum(alpha * ys, clip * xs)
    xc = xs - xs.mean(axis=2, keepdims=True)
    yc = yp - yp.mean(axis=2, keepdims=True)
    den = np.linalg.norm(xc, axis=2) * np.linalg.norm(yc, axis=2)
    num = np.sum(xc * yc, axis=2)
    # a flat envelope has no defined correlation; count it as a match only if both are flat
    corr = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.all(xc == yc, axis=2).astype(float))
    return float(np.mean(corr))
