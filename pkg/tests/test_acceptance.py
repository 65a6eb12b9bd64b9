"""Acceptance suite: one test per numbered criterion.

Every test ends in ``verdict(n, ok, detail)``, which prints a PASS/FAIL line
and asserts. The terminal summary repeats the lines for all criteria.

Criteria 3, 4, 5, 6, 8 and 9 share one seed-pinned 5k-step desk training run.
It is cached under ``$FUSETOK_CACHE/acceptance/<config hash>`` together with
the per-step encoder bookkeeping and the wall time of the run, so a second
session reuses it. Delete that directory to retrain from scratch.
"""

import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import torch

from conftest import tiny_config, verdict
from fusetok import synth
from fusetok.cli import cache_dir
from fusetok.config import FlowConfig, desk
from fusetok.dsp import MelConfig, Waveform
from fusetok.downstream import (
    FlowModel,
    block_means,
    enhance,
    flow_matching_loss,
    guided_velocity,
    reconstruct,
    sample_latent,
    se_pairs,
    se_training_pairs,
    train_denoiser,
    train_flow,
    unified_latents,
)
from fusetok.evaluation import ablation_dataset, ablation_report, frechet_distance, mel_distance, stft_distance, stoi
from fusetok.evaluation.frechet import GaussianStats
from fusetok.evaluation.distances import mel_distance_per_scale
from fusetok.evaluation.probe import fit_probe, predict
from fusetok.model import AcousticEncoder, Decoder, FeatureTensor, Role
from fusetok.model.checkpoint import load_tokenizer, tokenizer_payload, write_checkpoint
from fusetok.model.frontend import LogMel
from fusetok.training import (
    GeneratorLossBreakdown,
    MultiFrequencyDiscriminator,
    adv_gen_loss,
    disc_loss,
    feature_matching_loss,
    mel_loss,
    new_state,
    semantic_loss,
    train,
)
from fusetok.training.trainer import _generator_objective

HERE = Path(__file__).parent


# -- shared desk run ------------------------------------------------------------


def _desk_run():
    cfg = desk()
    root = cache_dir() / "acceptance" / cfg.hash()[:16]
    ckpt, info_path = root / "tokenizer.pt", root / "run.json"
    if not (ckpt.is_file() and info_path.is_file()):
        root.mkdir(parents=True, exist_ok=True)
        corpus = synth.training_corpus(cfg.data.corpus_clips, cfg.rng("corpus"), cfg.data.clip_seconds)
        t0 = time.perf_counter()
        state = new_state(cfg)
        hashes = {"0": state.model.semantic_hash()}
        grads = []

        def track(s):
            grads.append(s.last_metrics["semantic_grad_norm"])
            if s.step == 2000 or s.step == cfg.optim.total_steps:
                hashes[str(s.step)] = s.model.semantic_hash()

        train(cfg, corpus, state=state, log_path=root / "metrics.jsonl", callback=track)
        runtime = time.perf_counter() - t0
        write_checkpoint(ckpt, tokenizer_payload(state.model, cfg, step=state.step))
        info = {
            "config_hash": cfg.hash(),
            "steps": state.step,
            "runtime_s": runtime,
            "semantic_hashes": hashes,
            "semantic_grad_norms": grads,
        }
        info_path.write_text(json.dumps(info))
    model, cfg_back, _ = load_tokenizer(ckpt)
    assert cfg_back.hash() == cfg.hash()
    return model.eval(), cfg, json.loads(info_path.read_text())


@pytest.fixture(scope="session")
def desk_run():
    return _desk_run()


@pytest.fixture(scope="session")
def ablation_rows(desk_run):
    model, cfg, _ = desk_run
    return {r.role: r for r in ablation_report(model, ablation_dataset(cfg), cfg.distances, seed=cfg.seed)}


# -- 1 --------------------------------------------------------------------------


@pytest.mark.criterion(1)
def test_criterion_01_loss_composition_identity():
    t0 = time.perf_counter()
    state = new_state(tiny_config(seed=11))
    gen = torch.Generator().manual_seed(0)
    bad = []
    for i in range(1000):
        # random length (whole frames), gain and colour per input
        n = 640 * int(torch.randint(4, 9, (1,), generator=gen))
        x = torch.randn(1, n, generator=gen) * float(torch.rand(1, generator=gen) * 0.9 + 0.01)
        if i % 2:
            x = torch.cumsum(x, -1) / math.sqrt(n)
        with torch.no_grad():
            b, total = _generator_objective(x, state)
        expected = 45.0 * b.l_sem + 45.0 * b.l_mel + b.l_fm + b.l_adv
        if (b.lambda_sem, b.lambda_mel) != (45.0, 45.0) or b.total != expected:
            bad.append(i)
        if not math.isclose(total.item(), b.total, rel_tol=1e-5, abs_tol=1e-5):
            bad.append(i)
    # the identity also holds for arbitrary component values
    rng = np.random.default_rng(0)
    for v in rng.standard_normal((1000, 4)) * 10:
        b = GeneratorLossBreakdown(*map(float, v))
        if b.total != 45.0 * b.l_sem + 45.0 * b.l_mel + b.l_fm + b.l_adv:
            bad.append(-1)
    dt = time.perf_counter() - t0
    verdict(1, not bad and dt < 60, f"1000 model inputs + 1000 value draws, {len(bad)} mismatches, {dt:.1f}s (limit 60s)")


# -- 2 --------------------------------------------------------------------------


def _relative_errors(loss_fn, params, eps=1e-5, floor=1e-8):
    """Analytic vs central-difference gradient, one relative error per parameter element.

    In float64 a step of 1e-5 keeps truncation error far below roundoff on
    near-zero gradients.
    """
    grads = torch.autograd.grad(loss_fn(), params, allow_unused=True)
    errs = []
    with torch.no_grad():
        for p, g in zip(params, grads):
            g = torch.zeros_like(p) if g is None else g
            flat, gf = p.data.view(-1), g.reshape(-1)
            for i in range(flat.numel()):
                old = flat[i].item()
                flat[i] = old + eps
                up = loss_fn().item()
                flat[i] = old - eps
                down = loss_fn().item()
                flat[i] = old
                num = (up - down) / (2 * eps)
                a = gf[i].item()
                errs.append(abs(a - num) / max(abs(a), abs(num), floor))
    return np.asarray(errs)


@pytest.mark.criterion(2)
def test_criterion_02_gradient_suite():
    t0 = time.perf_counter()
    torch.manual_seed(0)
    mel_cfg = MelConfig(name="mini", n_mels=8, fft_size=64, hop=16)
    acoustic = AcousticEncoder(mel_cfg, dim=8, patch_frames=4).double()
    decoder = Decoder(in_dim=8, dim=8, intermediate=16, layers=1, samples_per_frame=64).double()
    disc = MultiFrequencyDiscriminator((64, 128), channels=2).double()
    flow = FlowModel(8, FlowConfig(width=8, depth=1, heads=2, num_classes=4)).double().eval()
    with torch.no_grad():
        # move the affine LayerNorms and zero-initialised gates off their special points
        for m in (acoustic, decoder, flow):
            for p in m.parameters():
                p.add_(0.05 * torch.randn_like(p))
    logmel = LogMel(mel_cfg).double()
    x = torch.randn(1, 256, dtype=torch.float64) * 0.3
    z_sem = torch.randn(1, 4, 8, dtype=torch.float64)
    z1, z0 = torch.randn(3, 4, 8, dtype=torch.float64), torch.randn(3, 4, 8, dtype=torch.float64)
    cond, t = torch.tensor([0, 2, 4]), torch.tensor([0.2, 0.5, 0.9], dtype=torch.float64)

    def fake():
        return decoder(z_sem + acoustic(x))

    def logits(outs):
        return [lg for lg, _ in outs]

    def feats(outs):
        return [f for _, f in outs]

    y_fixed = fake().detach()
    cases = {
        "l_sem": (lambda: semantic_loss(z_sem, acoustic(x)), list(acoustic.parameters())),
        "l_mel": (lambda: mel_loss(logmel(x), logmel(fake())), list(acoustic.parameters()) + list(decoder.parameters())),
        # real-side features are constants to the generator, so only generator parameters are checked
        "l_fm": (lambda: feature_matching_loss(feats(disc(x)), feats(disc(fake()))), list(acoustic.parameters()) + list(decoder.parameters())),
        "hinge_disc": (lambda: disc_loss(logits(disc(x)), logits(disc(y_fixed))), list(disc.parameters())),
        "hinge_gen": (lambda: adv_gen_loss(logits(disc(fake()))), list(decoder.parameters())),
        "flow": (lambda: flow_matching_loss(flow, z1, cond, t, z0), list(flow.parameters())),
    }
    lines, ok = [], True
    for name, (fn, params) in cases.items():
        err = _relative_errors(fn, params)
        frac = float(np.mean(err < 1e-3))
        worst = float(err.max())
        ok &= frac >= 0.95 and worst < 1e-2
        lines.append(f"{name}: n={err.size} <1e-3 {100 * frac:.1f}% worst {worst:.1e}")
    dt = time.perf_counter() - t0
    verdict(2, ok and dt < 300, "; ".join(lines) + f"; {dt:.0f}s (limit 300s)")


# -- 3 --------------------------------------------------------------------------


@pytest.mark.criterion(3)
def test_criterion_03_frozen_encoder(desk_run):
    _, _, info = desk_run
    h = info["semantic_hashes"]
    grads = info["semantic_grad_norms"]
    same = h["0"] == h["2000"] == h[str(info["steps"])]
    zero = len(grads) == info["steps"] and all(g == 0.0 for g in grads)
    verdict(
        3,
        same and zero,
        f"hash at steps 0/2000/{info['steps']} identical={same}; grad norm 0 at all {len(grads)} steps={zero}",
    )


# -- 4 --------------------------------------------------------------------------


@pytest.mark.criterion(4)
def test_criterion_04_temporal_alignment(desk_run):
    model, _, _ = desk_run
    rng = np.random.default_rng(4)
    bad = []
    for seconds in rng.uniform(0.2, 10.0, 200):
        w = Waveform(rng.standard_normal(int(round(seconds * 16000))) * 0.1, 16000)
        with torch.no_grad():
            zs, za = model.encode_semantic(w), model.encode_acoustic(w)
            y = model.decode(FeatureTensor(zs.data + za.data, Role.UNIFIED))
        t = zs.shape[1]
        if za.shape[1] != t or t != math.ceil(len(w) / 640) or len(y) != 640 * t or y.sample_rate != 16000:
            bad.append(round(float(seconds), 3))
    verdict(4, not bad, f"200 durations in [0.2, 10] s, misaligned: {bad[:5]}")


# -- 5 --------------------------------------------------------------------------


@pytest.mark.criterion(5)
def test_criterion_05_ablation_ordering(desk_run, ablation_rows):
    _, _, info = desk_run
    d = {role: row.recon.mel_distance for role, row in ablation_rows.items()}
    sem_ratio = d["semantic"] / d["unified"]
    ac_ratio = d["acoustic"] / d["unified"]
    runtime_min = info["runtime_s"] / 60
    ok = sem_ratio > 3 and ac_ratio <= 1.3 and runtime_min < 30
    verdict(
        5,
        ok,
        f"mel distance semantic {d['semantic']:.3f} / acoustic {d['acoustic']:.3f} / unified {d['unified']:.3f}; "
        f"semantic/unified {sem_ratio:.2f} (need > 3), acoustic/unified {ac_ratio:.2f} (need <= 1.3); "
        f"training {runtime_min:.1f} min (limit 30)",
    )


# -- 6 --------------------------------------------------------------------------


@pytest.mark.criterion(6)
def test_criterion_06_probe_ordering(ablation_rows):
    acc = {role: {t: r.score for t, r in row.probes.items()} for role, row in ablation_rows.items()}
    tasks = list(acc["unified"])
    wins = sum(acc["unified"][t] >= acc["acoustic"][t] for t in tasks)
    above = all(acc["unified"][t] >= 25.0 + 20.0 for t in tasks)
    table = ", ".join(
        f"{t} u={acc['unified'][t]:.0f} a={acc['acoustic'][t]:.0f} s={acc['semantic'][t]:.0f}" for t in tasks
    )
    gap = np.mean([acc["unified"][t] - acc["semantic"][t] for t in tasks])
    verdict(
        6,
        len(tasks) == 4 and wins >= 3 and above,
        f"unified >= acoustic on {wins}/4, all >= 45%: {above}; mean unified-semantic gap {gap:+.1f} pts; {table}",
    )


# -- 7 --------------------------------------------------------------------------

# Unit tests that carry the brute-force and oracle examples for each module.
DERIVED_EXAMPLES = [
    "test_dsp.py::test_resample_32k_to_16k_keeps_440hz_peak",
    "test_dsp.py::test_stft_impulse_matches_direct_dft",
    "test_dsp.py::test_stft_frame_count_one_second",
    "test_dsp.py::test_istft_chirp_stoi",
    "test_dsp.py::test_melspec_1khz_peak_at_nearest_centre",
    "test_model.py::test_fuse_matches_scalar_loop",
    "test_model.py::test_decoder_gradient_matches_finite_differences",
    "test_losses.py::test_semantic_loss_matches_loop",
    "test_losses.py::test_mel_loss_sine_vs_half_amplitude_matches_numpy_mels",
    "test_losses.py::test_disc_loss_matches_loop",
    "test_losses.py::test_adv_gen_loss_examples",
    "test_losses.py::test_feature_matching_matches_loop",
    "test_trainer.py::test_smoke_run_lowers_loss_and_keeps_encoder",
    "test_distances.py::test_mel_distance_sine_vs_noise_matches_scale_by_scale_oracle",
    "test_distances.py::test_stft_distance_random_pair_matches_oracle",
    "test_stoi.py::test_white_noise_scores_low",
    "test_stoi.py::test_40db_noise_scores_high",
    "test_stoi.py::test_matches_reference_implementation",
    "test_frechet.py::test_law_of_large_numbers",
    "test_frechet.py::test_random_spd_pair_matches_brute_force",
    "test_probe.py::test_permuted_labels_sit_at_chance",
    "test_ablation.py::test_report_has_one_row_per_role",
    "test_enhance.py::test_energy_ratio_matches_target",
    "test_enhance.py::test_training_halves_held_out_mse_and_leaves_tokenizer_alone",
    "test_flow.py::test_loss_matches_scalar_loop",
    "test_flow.py::test_trained_flow_generates_the_conditioned_class",
    "test_manifest.py::test_three_valid_files_have_header_durations",
    "test_cli.py::test_resume_half_way_equals_uninterrupted",
    "test_cli.py::test_report_reaggregates_and_plots",
]
# The two trained-denoiser examples (clean input not degraded, noisy input
# improved) run on the desk tokenizer below, next to criterion 8.


@pytest.mark.criterion(7)
def test_criterion_07_metric_oracles():
    rng = np.random.default_rng(7)
    speech = synth.speech_set(1, rng, 2.0)[0]
    s = stoi(speech, speech)
    other = Waveform(rng.standard_normal(16000) * 0.1, 16000)
    zeros = [mel_distance(other, other), stft_distance(other, other), *mel_distance_per_scale(other, other)]
    worst_fd = 0.0
    for d in (1, 3, 8):
        m1, m2 = rng.standard_normal(d), rng.standard_normal(d)
        fd = frechet_distance(GaussianStats(m1, np.eye(d)), GaussianStats(m2, np.eye(d)))
        worst_fd = max(worst_fd, abs(fd - float(np.sum((m1 - m2) ** 2))))
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *DERIVED_EXAMPLES],
        cwd=HERE,
        capture_output=True,
        text=True,
    )
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = abs(s - 1.0) <= 1e-6 and all(z == 0.0 for z in zeros) and worst_fd <= 1e-8 and proc.returncode == 0
    verdict(
        7,
        ok,
        f"stoi(x,x)-1 = {s - 1:.1e}; distances on identical inputs {max(zeros):.1e}; "
        f"frechet closed form error {worst_fd:.1e}; oracle examples: {summary}",
    )


# -- 8 --------------------------------------------------------------------------


@pytest.fixture(scope="session")
def trained_denoiser(desk_run):
    model, cfg, _ = desk_run
    return train_denoiser(model, se_training_pairs(cfg), cfg)


@pytest.mark.criterion(8)
def test_criterion_08_speech_enhancement(desk_run, trained_denoiser):
    model, cfg, _ = desk_run
    held = se_pairs(20, cfg.rng("se-heldout"), snr_db=5.0)
    wins, margins = 0, []
    for p in held:
        enhanced = stft_distance(p.clean, enhance(p.mixed, trained_denoiser, model), cfg.distances)
        baseline = stft_distance(p.clean, reconstruct(p.mixed, model), cfg.distances)
        wins += enhanced < baseline
        margins.append(baseline - enhanced)
    verdict(
        8,
        wins == len(held) == 20,
        f"enhanced beats noisy reconstruction on {wins}/20 clips at 5 dB; "
        f"stft distance gain min {min(margins):.3f} mean {np.mean(margins):.3f}",
    )


def test_denoiser_leaves_clean_input_intelligible(desk_run, trained_denoiser):
    model, cfg, _ = desk_run
    clean = synth.speech_set(10, cfg.rng("se-clean-check"), 2.0)
    for w in clean:
        assert stoi(w, enhance(w, trained_denoiser, model)) > stoi(w, reconstruct(w, model)) - 0.05


# -- 9 --------------------------------------------------------------------------


@pytest.mark.criterion(9)
def test_criterion_09_flow_smoke(desk_run):
    model, cfg, _ = desk_run
    data = synth.sound_classes(200, cfg.rng("flow-toy"), seconds=1.0)
    z = unified_latents(model, data.waves)
    flow = train_flow(z, data.labels, cfg)
    means = block_means(flow.history, 500)
    monotone = len(means) >= 3 and all(b < a for a, b in zip(means, means[1:]))

    zt = torch.randn(4, z.shape[1], z.shape[2], generator=torch.Generator().manual_seed(1))
    tt, cc = torch.full((4,), 0.3), torch.tensor([0, 1, 2, 3])
    with torch.no_grad():
        exact = torch.equal(guided_velocity(flow, zt, tt, cc, 1.0), flow(zt, tt, cc))

    probe = fit_probe(z.numpy().mean(1), data.labels)
    cond = torch.arange(4).repeat_interleave(25)
    gen = sample_latent(flow, cond, z.shape[1], steps=cfg.flow.sample_steps, cfg_scale=cfg.flow.cfg_scale,
                        generator=cfg.torch_generator("flow-acceptance-sample"))
    acc = float(np.mean(predict(probe, gen.numpy()) == cond.numpy())) * 100
    verdict(
        9,
        monotone and exact and acc >= 70,
        f"500-step block means {[round(m, 4) for m in means]} strictly decreasing={monotone}; "
        f"cfg=1 equals conditional velocity={exact}; probe accuracy on samples {acc:.0f}% (need >= 70)",
    )


# -- 10 -------------------------------------------------------------------------


def _steps(path):
    return [r for r in map(json.loads, Path(path).read_text().splitlines()) if r["type"] == "step"]


@pytest.mark.criterion(10)
def test_criterion_10_determinism(tmp_path):
    def cfg():
        c = desk()
        c.seed = 10
        c.optim.total_steps = 30
        c.checkpoint_every = 15
        return c

    corpus = lambda c: synth.training_corpus(c.data.corpus_clips, c.rng("corpus"), c.data.clip_seconds)  # noqa: E731
    a, b, r = cfg(), cfg(), cfg()
    assert a.hash() == b.hash() == r.hash()
    train(a, corpus(a), log_path=tmp_path / "a.jsonl")
    train(b, corpus(b), log_path=tmp_path / "b.jsonl")
    train(r, corpus(r), steps=15, log_path=tmp_path / "r.jsonl", checkpoint_path=tmp_path / "r.pt")
    train(r, corpus(r), resume_from=tmp_path / "r.pt", log_path=tmp_path / "r.jsonl")

    def worst(x, y):
        if len(x) != len(y) or [e["step"] for e in x] != [e["step"] for e in y]:
            return math.inf
        return max(abs(p[k] - q[k]) for p, q in zip(x, y) for k in p.keys() - {"type"})

    la, lb, lr = _steps(tmp_path / "a.jsonl"), _steps(tmp_path / "b.jsonl"), _steps(tmp_path / "r.jsonl")
    rep, res = worst(la, lb), worst(la, lr)
    verdict(
        10,
        len(la) == 30 and rep <= 1e-6 and res <= 1e-6,
        f"30-step desk runs: repeat max diff {rep:.1e}, resume-at-15 max diff {res:.1e} (limit 1e-6)",
    )
