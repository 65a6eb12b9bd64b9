"""Built-in synthetic audio corpus.

Everything the test-suite and demos need is generated here from a seed:
tones, chirps, coloured noise, event trains and a crude speech-like
source-filter signal, plus four labelled attribute tasks used for linear
probing and for pretraining the small frozen semantic encoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .dsp import Waveform

SR = 16000

PITCH_CLASSES = (0, 3, 6, 9)  # semitones above C: C, D#, F#, A
ENVELOPES = ("flat", "decay", "swell", "tremolo")
NOISE_COLORS = {"white": 0.0, "pink": 1.0, "brown": 2.0, "blue": -1.0}
SOUND_CLASSES = ("tone", "chirp", "noise", "events")
PROBE_TASKS = ("pitch_class", "envelope", "noise_color", "event_count")


@dataclass
class LabelledSet:
    waves: list[Waveform]
    labels: np.ndarray
    task: str
    num_classes: int


def _fade(n: int, sr: int, ms: float = 10.0) -> np.ndarray:
    k = min(n // 2, int(sr * ms / 1000))
    env = np.ones(n)
    if k > 0:
        ramp = 0.5 - 0.5 * np.cos(np.linspace(0, np.pi, k))
        env[:k] = ramp
        env[n - k :] = ramp[::-1]
    return env


ROOM_TONE = 3e-4  # std of the background noise floor, about -70 dBFS


def _peak(x: np.ndarray, rng: np.random.Generator, lo: float = 0.2, hi: float = 0.9) -> np.ndarray:
    """Scale to a random peak and add a faint noise floor.

    The floor stands in for the room tone of real recordings; without it,
    gaps between events are digital silence whose log-mel sits on the
    floor value, which no vocoder reproduces.
    """
    m = np.max(np.abs(x))
    y = x if m == 0 else x * (rng.uniform(lo, hi) / m)
    return y + ROOM_TONE * rng.standard_normal(x.shape[0])


def harmonic_tone(f0: float, n: int, sr: int = SR, harmonics: int = 3, phase=None) -> np.ndarray:
    t = np.arange(n) / sr
    x = np.zeros(n)
    for h in range(1, harmonics + 1):
        if f0 * h >= sr / 2:
            break
        ph = 0.0 if phase is None else phase[h - 1]
        x += np.sin(2 * np.pi * f0 * h * t + ph) / h
    return x


def colored_noise(rng: np.random.Generator, n: int, exponent: float) -> np.ndarray:
    """Gaussian noise with power spectral density proportional to 1/f**exponent."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n)
    f[0] = f[1]
    spec *= f ** (-exponent / 2)
    x = np.fft.irfft(spec, n)
    return x / (np.std(x) + 1e-12)


def chirp(rng: np.random.Generator, n: int, sr: int = SR) -> np.ndarray:
    t = np.arange(n) / sr
    f0, f1 = rng.uniform(100, 800), rng.uniform(1000, 5000)
    if rng.random() < 0.5:
        f0, f1 = f1, f0
    return signal.chirp(t, f0, t[-1], f1, method="logarithmic")


def event_train(rng: np.random.Generator, n: int, count: int, sr: int = SR) -> np.ndarray:
    """``count`` short decaying bursts at non-overlapping random onsets."""
    burst = int(0.05 * sr)
    slots = max(count, (n - burst) // burst)
    onsets = np.sort(rng.choice(slots, size=count, replace=False)) * burst
    x = np.zeros(n)
    tb = np.arange(burst) / sr
    for on in onsets:
        f = rng.uniform(500, 3000)
        b = (np.sin(2 * np.pi * f * tb) + 0.5 * rng.standard_normal(burst)) * np.exp(-tb / 0.012)
        x[on : on + burst] += b
    return x


def speech_like(rng: np.random.Generator, n: int, sr: int = SR) -> np.ndarray:
    """Glottal pulse train through moving formant resonators, syllable-rate gated."""
    t = np.arange(n) / sr
    f0 = rng.uniform(100, 220) * (1 + 0.1 * np.sin(2 * np.pi * rng.uniform(0.5, 2) * t))
    phase = 2 * np.pi * np.cumsum(f0) / sr
    src = signal.sawtooth(phase) + 0.05 * rng.standard_normal(n)
    syl = int(rng.uniform(0.15, 0.25) * sr)
    out = np.zeros(n)
    for start in range(0, n, syl):
        seg = src[start : start + syl]
        y = np.zeros_like(seg)
        for fc, bw in ((rng.uniform(300, 900), 80), (rng.uniform(900, 2500), 120), (rng.uniform(2500, 3500), 200)):
            r = np.exp(-np.pi * bw / sr)
            a = [1, -2 * r * np.cos(2 * np.pi * fc / sr), r * r]
            y += signal.lfilter([1 - r], a, seg)
        gate = 0.3 + 0.7 * np.sin(np.linspace(0, np.pi, seg.shape[0])) ** 2
        out[start : start + syl] = y * gate
    return out


# ---------------------------------------------------------------------------
# attribute tasks


def pitch_class_clip(rng, label: int, n: int, sr: int = SR) -> np.ndarray:
    octave = rng.integers(3, 6)
    f0 = 440.0 * 2 ** ((PITCH_CLASSES[label] - 9) / 12 + (octave - 4))
    return harmonic_tone(f0, n, sr, phase=rng.uniform(0, 2 * np.pi, 3))


def envelope_clip(rng, label: int, n: int, sr: int = SR) -> np.ndarray:
    carrier = harmonic_tone(rng.uniform(150, 600), n, sr)
    t = np.arange(n) / sr
    kind = ENVELOPES[label]
    if kind == "flat":
        env = np.ones(n)
    elif kind == "decay":
        env = np.exp(-t / rng.uniform(0.05, 0.15))
    elif kind == "swell":
        env = np.sin(np.pi * t / t[-1]) ** 4
    else:
        env = 0.5 + 0.5 * np.sin(2 * np.pi * rng.uniform(6, 10) * t)
    return carrier * env


def noise_color_clip(rng, label: int, n: int, sr: int = SR) -> np.ndarray:
    return colored_noise(rng, n, list(NOISE_COLORS.values())[label])


def event_count_clip(rng, label: int, n: int, sr: int = SR) -> np.ndarray:
    return event_train(rng, n, label + 1, sr)


_TASK_GEN = {
    "pitch_class": pitch_class_clip,
    "envelope": envelope_clip,
    "noise_color": noise_color_clip,
    "event_count": event_count_clip,
}


def probe_task(task: str, n_clips: int, rng: np.random.Generator, seconds: float = 1.0, sr: int = SR) -> LabelledSet:
    """Balanced 4-class labelled set for one attribute task."""
    gen = _TASK_GEN[task]
    n = int(round(seconds * sr))
    labels = np.arange(n_clips) % 4
    rng.shuffle(labels)
    waves = [Waveform(_peak(gen(rng, int(y), n, sr) * _fade(n, sr), rng), sr) for y in labels]
    return LabelledSet(waves, labels, task, 4)


def sound_class_clip(rng, label: int, n: int, sr: int = SR) -> np.ndarray:
    kind = SOUND_CLASSES[label]
    if kind == "tone":
        return harmonic_tone(rng.uniform(150, 1000), n, sr)
    if kind == "chirp":
        return chirp(rng, n, sr)
    if kind == "noise":
        return colored_noise(rng, n, rng.choice(list(NOISE_COLORS.values())))
    return event_train(rng, n, int(rng.integers(2, 6)), sr)


def sound_classes(n_clips: int, rng: np.random.Generator, seconds: float = 1.0, sr: int = SR) -> LabelledSet:
    n = int(round(seconds * sr))
    labels = np.arange(n_clips) % 4
    rng.shuffle(labels)
    waves = [Waveform(_peak(sound_class_clip(rng, int(y), n, sr) * _fade(n, sr), rng), sr) for y in labels]
    return LabelledSet(waves, labels, "sound_class", 4)


def speech_set(n_clips: int, rng: np.random.Generator, seconds: float = 1.0, sr: int = SR) -> list[Waveform]:
    n = int(round(seconds * sr))
    return [Waveform(_peak(speech_like(rng, n, sr) * _fade(n, sr), rng), sr) for _ in range(n_clips)]


def training_corpus(n_clips: int, rng: np.random.Generator, seconds: float = 2.0, sr: int = SR) -> list[Waveform]:
    """Mixed corpus: every generator above, some clips layering two sources."""
    n = int(round(seconds * sr))
    makers = [
        lambda: sound_class_clip(rng, int(rng.integers(4)), n, sr),
        lambda: _TASK_GEN[PROBE_TASKS[rng.integers(4)]](rng, int(rng.integers(4)), n, sr),
        lambda: speech_like(rng, n, sr),
    ]
    out = []
    for i in range(n_clips):
        x = makers[i % len(makers)]()
        x = x / (np.max(np.abs(x)) + 1e-12)
        if rng.random() < 0.3:
            y = makers[rng.integers(len(makers))]()
            x = x + rng.uniform(0.2, 0.6) * y / (np.max(np.abs(y)) + 1e-12)
        out.append(Waveform(_peak(x * _fade(n, sr), rng), sr))
    return out
