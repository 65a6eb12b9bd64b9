import numpy as np
import pytest
from pystoi import stoi as reference_stoi

from conftest import sine
from fusetok import synth
from fusetok.dsp import Waveform
from fusetok.evaluation import MetricError, stoi
from fusetok.evaluation.stoi import third_octave_bands


@pytest.fixture(scope="module")
def speech():
    return synth.speech_like(np.random.default_rng(11), 32000) * 0.5


def w(x, sr=16000):
    return Waveform(np.asarray(x, dtype=np.float64), sr)


def test_identity_is_one(speech):
    assert stoi(w(speech), w(speech)) == pytest.approx(1.0, abs=1e-6)


def test_white_noise_scores_low(speech):
    n = np.random.default_rng(1).standard_normal(speech.shape[0]) * 0.3
    assert stoi(w(speech), w(n)) < 0.2


def test_40db_noise_scores_high(speech):
    n = np.random.default_rng(2).standard_normal(speech.shape[0])
    n *= np.sqrt(np.sum(speech**2) / np.sum(n**2) / 1e4)
    assert stoi(w(speech), w(speech + n)) > 0.95


@pytest.mark.parametrize("snr", [-5.0, 0.0, 5.0, 15.0])
def test_matches_reference_implementation(speech, snr):
    n = np.random.default_rng(int(snr) + 10).standard_normal(speech.shape[0])
    n *= np.sqrt(np.sum(speech**2) / np.sum(n**2) / 10 ** (snr / 10))
    ours = stoi(w(speech), w(speech + n))
    assert ours == pytest.approx(reference_stoi(speech, speech + n, 16000, extended=False), abs=1e-4)


def test_scale_invariance(speech):
    n = np.random.default_rng(3).standard_normal(speech.shape[0]) * 0.05
    a = stoi(w(speech), w(speech + n))
    b = stoi(w(3 * speech), w(3 * (speech + n)))
    assert a == pytest.approx(b, abs=1e-9)


def test_band_layout():
    bands, centres = third_octave_bands()
    assert bands.shape == (15, 257)
    assert centres[0] == 150.0
    assert centres[-1] == pytest.approx(150 * 2 ** (14 / 3))
    assert np.all(bands.sum(axis=1) > 0)


def test_errors():
    with pytest.raises(MetricError):
        stoi(sine(440, 0.1), sine(440, 0.1))
    with pytest.raises(MetricError):
        stoi(sine(440, 1.0), sine(440, 0.5))
    with pytest.raises(MetricError):
        stoi(w(np.zeros(16000)), w(np.zeros(16000)))
