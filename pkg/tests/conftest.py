import os
import sys

import numpy as np
import pytest
import torch

sys.path.insert(0, os.path.dirname(__file__))

from fusetok.config import desk  # noqa: E402
from fusetok.dsp import Waveform  # noqa: E402

torch.set_num_threads(1)


def tiny_config(seed: int = 0):
    """A small, fast configuration with a randomly initialised frozen encoder."""
    cfg = desk()
    cfg.seed = seed
    cfg.model.dim = 16
    cfg.model.semantic_heads = 2
    cfg.model.semantic_layers = 1
    cfg.model.semantic_preset = "random"
    cfg.model.decoder_dim = 32
    cfg.model.decoder_intermediate = 64
    cfg.model.decoder_layers = 2
    cfg.discriminator.channels = 4
    cfg.optim.batch_size = 2
    cfg.optim.total_steps = 20
    cfg.data.corpus_clips = 8
    cfg.data.clip_seconds = 1.0
    return cfg.validate()


@pytest.fixture
def tiny_cfg():
    return tiny_config()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def sine(freq: float, seconds: float = 1.0, sr: int = 16000, amp: float = 0.5) -> Waveform:
    t = np.arange(int(round(seconds * sr))) / sr
    return Waveform(amp * np.sin(2 * np.pi * freq * t), sr)


# -- acceptance reporting ------------------------------------------------------
# Acceptance tests call ``verdict`` with their criterion number; the terminal
# summary then prints one PASS/FAIL line per criterion, including criteria
# whose test errored before reaching a verdict.

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def verdict(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(ok), detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark and rep.failed and mark.args[0] not in ACCEPTANCE:
        ACCEPTANCE[mark.args[0]] = (False, f"error in {rep.when}: {call.excinfo.typename if call.excinfo else '?'}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
