import numpy as np
import pytest

from conftest import sine
from oracles import scalewise_log10_l1
from fusetok import synth
from fusetok.config import DistanceConfig
from fusetok.dsp import Waveform
from fusetok.evaluation import MetricError, mel_distance, mel_distance_per_scale, recon_report, stft_distance

CFG = DistanceConfig()


def noise(seed, n=16000, amp=0.1):
    return Waveform(np.random.default_rng(seed).standard_normal(n) * amp, 16000)


def test_window_sets_are_recorded():
    assert CFG.mel_windows == (32, 64, 128, 256, 512, 1024, 2048)
    assert CFG.stft_windows == (512, 1024, 2048)


@pytest.mark.parametrize("fn", [mel_distance, stft_distance])
def test_zero_on_identical_and_symmetric(fn):
    a, b = sine(440), noise(1)
    assert fn(a, a) == 0.0
    assert fn(a, b) == pytest.approx(fn(b, a), rel=1e-12)
    assert fn(a, b) > 0


def test_mel_distance_sine_vs_noise_matches_scale_by_scale_oracle():
    a, b = sine(440, 0.5), noise(2, 8000)
    ref = scalewise_log10_l1(a.samples, b.samples, 16000, CFG.mel_windows, CFG.mel_bins, CFG.clamp)
    assert mel_distance(a, b) == pytest.approx(ref, rel=1e-9)
    assert len(mel_distance_per_scale(a, b)) == 7


def test_stft_distance_random_pair_matches_oracle():
    a, b = noise(3, 6000), noise(4, 6000, amp=0.3)
    ref = scalewise_log10_l1(a.samples, b.samples, 16000, CFG.stft_windows, [0] * 3, CFG.clamp)
    assert stft_distance(a, b) == pytest.approx(ref, rel=1e-9)


def test_scaling_by_two_increases_stft_distance():
    a = noise(5)
    doubled = Waveform(a.samples * 2, 16000)
    assert stft_distance(a, doubled) > stft_distance(a, a)
    # every unclamped bin shifts by log10(2)
    assert stft_distance(a, doubled) == pytest.approx(np.log10(2), rel=1e-6)


def test_length_and_rate_mismatch():
    with pytest.raises(MetricError):
        mel_distance(sine(440, 1.0), sine(440, 0.5))
    with pytest.raises(MetricError):
        stft_distance(sine(440, 1.0, sr=8000), Waveform(np.zeros(8000), 16000))


def test_recon_report_averages_and_sorts():
    refs = synth.speech_set(3, np.random.default_rng(0), 1.0)
    ests = [Waveform(r.samples + 0.01 * np.random.default_rng(i).standard_normal(len(r)), 16000) for i, r in enumerate(refs)]
    rep = recon_report(refs, ests, ids=["c", "a", "b"])
    assert [row["id"] for row in rep.per_file] == ["a", "b", "c"]
    assert rep.mel_distance == pytest.approx(np.mean([mel_distance(r, e) for r, e in zip(refs, ests)]))
    assert rep.stft_distance >= 0 and 0 < rep.stoi <= 1
    assert set(rep.to_record()) == {"mel_distance", "stft_distance", "stoi"}
    with pytest.raises(MetricError):
        recon_report(refs, ests[:2])


def test_recon_report_skips_undefined_stoi():
    long = synth.speech_set(1, np.random.default_rng(1), 1.0)[0]
    x = np.zeros(16000)
    x[:1500] = np.sin(np.arange(1500) * 0.2)  # under 0.4 s of active signal
    short = Waveform(x, 16000)
    rep = recon_report([long, short], [long, short])
    assert rep.per_file[1]["stoi"] is None
    assert rep.stoi == pytest.approx(1.0, abs=1e-6)
    assert rep.mel_distance == 0.0
