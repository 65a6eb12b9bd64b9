import logging
import wave

import numpy as np
import pytest

from fusetok.dsp import Waveform, save_wav
from fusetok.manifest import Manifest, ManifestError, Record, ingest


def write_pcm16(path, n, sr):
    """A 16-bit PCM WAV written with the stdlib, independent of the package's writer."""
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(sr)
        f.writeframes((np.sin(np.arange(n) * 0.05) * 8000).astype("<i2").tobytes())


def test_empty_directory_warns(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        m = ingest(tmp_path)
    assert len(m) == 0 and m.errors == []
    assert "no audio files" in caplog.text


def test_three_valid_files_have_header_durations(tmp_path):
    specs = {"a.wav": (16000, 16000), "b.wav": (24000, 16000), "c.wav": (8000, 8000)}
    for name, (n, sr) in specs.items():
        write_pcm16(tmp_path / name, n, sr)
    m = ingest(tmp_path)
    assert len(m) == 3 and not m.errors
    for r in m.records:
        n, sr = specs[r.path.split("/")[-1]]
        with wave.open(r.path) as f:
            assert (f.getnframes(), f.getframerate()) == (n, sr)
        assert r.duration == pytest.approx(n / sr)
        assert r.sample_rate == sr
        assert r.needs_resample == (sr != 16000)


def test_corrupt_file_becomes_error_entry(tmp_path):
    write_pcm16(tmp_path / "ok1.wav", 1600, 16000)
    write_pcm16(tmp_path / "ok2.wav", 3200, 16000)
    (tmp_path / "bad.wav").write_bytes(b"RIFF....garbage")
    m = ingest(tmp_path)
    assert len(m.records) == 2
    assert len(m.errors) == 1 and m.errors[0]["path"].endswith("bad.wav")


def test_listing_with_labels_and_splits(tmp_path):
    for i in range(3):
        save_wav(tmp_path / f"x{i}.wav", Waveform(np.zeros(800) + 0.1, 16000))
    (tmp_path / "list.txt").write_text("# comment\nx0.wav,dog,train\nx1.wav,,test\nx2.wav\n")
    m = ingest(tmp_path / "list.txt")
    assert [r.label for r in m.records] == ["dog", None, None]
    assert [r.path.split("/")[-1] for r in m.split("train")] == ["x0.wav", "x2.wav"]
    assert len(m.split("test")) == 1


def test_round_trip_and_validation(tmp_path):
    write_pcm16(tmp_path / "a.wav", 1600, 16000)
    (tmp_path / "broken.wav").write_bytes(b"nope")
    m = ingest(tmp_path)
    m.save(tmp_path / "m.jsonl")
    back = Manifest.load(tmp_path / "m.jsonl")
    assert back.records == m.records and back.errors == m.errors
    with pytest.raises(ManifestError):
        Record(str(tmp_path / "a.wav"), 0.0, 16000).validate()
    with pytest.raises(ManifestError):
        Record(str(tmp_path / "a.wav"), 1.0, 16000, split="dev").validate()
    with pytest.raises(ManifestError):
        Record(str(tmp_path / "missing.wav"), 1.0, 16000).validate()
    (tmp_path / "bad.jsonl").write_text("{not json\n")
    with pytest.raises(ManifestError):
        Manifest.load(tmp_path / "bad.jsonl")
    with pytest.raises(ManifestError):
        ingest(tmp_path / "nowhere")
