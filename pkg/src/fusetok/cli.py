"""Command-line entry point: ``fusetok <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import synth
from .config import ConfigError, RunConfig, preset
from .dsp import DSPError, Waveform, load_wav, save_wav
from .manifest import Manifest, ManifestError, ingest

log = logging.getLogger("fusetok")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class DataError(ValueError):
    pass


def cache_dir() -> Path:
    path = Path(os.environ.get("FUSETOK_CACHE", Path.home() / ".cache" / "fusetok"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def load_config(spec: str | None, seed: int | None = None) -> RunConfig:
    """A preset name or a YAML file; ``seed`` overrides the stored seed."""
    if spec is None:
        cfg = preset("desk")
    elif Path(spec).is_file():
        cfg = RunConfig.load(spec)
    else:
        cfg = preset(spec)
    if seed is not None:
        cfg.seed = seed
    return cfg.validate()


def write_records(path: str | Path, records: list[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")
    return path


def _file_hash(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# data


def corpus_from_manifest(m: Manifest, cfg: RunConfig, split: str = "train") -> list[Waveform]:
    """Load a split, refusing rate mismatches before any work is done."""
    recs = m.split(split)
    if not recs:
        raise DataError(f"manifest has no {split!r} records")
    bad = [r.path for r in recs if r.sample_rate != cfg.model.sample_rate]
    if bad:
        raise DataError(f"{len(bad)} files are not at {cfg.model.sample_rate} Hz (first: {bad[0]}); resample them first")
    return [load_wav(r.path) for r in recs]


def synthetic_corpus(cfg: RunConfig) -> list[Waveform]:
    return synth.training_corpus(cfg.data.corpus_clips, cfg.rng("corpus"), cfg.data.clip_seconds)


def _inputs(args, cfg: RunConfig) -> tuple[list[str], list[Waveform]]:
    if args.inputs:
        return list(args.inputs), [load_wav(p) for p in args.inputs]
    if args.manifest:
        recs = Manifest.load(args.manifest).records
        return [r.path for r in recs], [load_wav(r.path) for r in recs]
    waves = synth.training_corpus(args.clips, cfg.rng("cli-heldout"), 1.28)
    return [f"synth_{i:03d}" for i in range(len(waves))], waves


def _frame_trim(w: Waveform, hop: int) -> Waveform:
    n = (len(w) // hop) * hop
    if n == 0:
        raise DataError(f"input of {len(w)} samples is shorter than one latent frame ({hop})")
    return Waveform(w.samples[:n], w.sample_rate)


# ---------------------------------------------------------------------------
# commands


def run_synth(out: str | Path, n: int, seed: int = 0, seconds: float = 2.0) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    waves = synth.training_corpus(n, np.random.default_rng(seed), seconds)
    lines = []
    for i, w in enumerate(waves):
        p = out / f"clip_{i:04d}.wav"
        save_wav(p, w)
        lines.append(p.name)
    listing = out / "listing.txt"
    listing.write_text("\n".join(lines) + "\n")
    return listing


def run_ingest(source: str | Path, out: str | Path) -> Manifest:
    m = ingest(source)
    m.save(out)
    for e in m.errors:
        log.warning("skipped %s: %s", e["path"], e["error"])
    if m.errors and not m.records:
        raise DataError(f"all {len(m.errors)} files failed to load")
    return m


def run_train(
    cfg: RunConfig,
    manifest: str | Path | None,
    out: str | Path,
    steps: int | None = None,
    resume: str | Path | None = None,
    dry_run: bool = False,
) -> Path:
    """Train and return the checkpoint path; ``dry_run`` only writes the
    config and the metrics-log header (usable with the paper preset)."""
    from .training import train
    from .training.trainer import MetricsLog, log_header

    out = Path(out)
    if dry_run:
        out.mkdir(parents=True, exist_ok=True)
        cfg.save(out / "config.yaml")
        MetricsLog(out / "metrics.jsonl", log_header(cfg))
        return out / "metrics.jsonl"
    corpus = corpus_from_manifest(Manifest.load(manifest), cfg) if manifest else synthetic_corpus(cfg)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.yaml")
    ckpt = out / "checkpoint.pt"
    train(cfg, corpus, steps, resume_from=resume, log_path=out / "metrics.jsonl", checkpoint_path=ckpt)
    return ckpt


def run_reconstruct(checkpoint, names, waves, out) -> list[dict]:
    from .evaluation import recon_report
    from .model.checkpoint import load_tokenizer

    model, cfg, _ = load_tokenizer(checkpoint)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    refs, ests = [], []
    for name, w in zip(names, waves):
        if w.sample_rate != cfg.model.sample_rate:
            raise DataError(f"{name}: {w.sample_rate} Hz, tokenizer expects {cfg.model.sample_rate} Hz")
        ref = _frame_trim(w, model.samples_per_frame)
        with torch.no_grad():
            est = model.decode(model.tokenize(ref)[2])
        save_wav(out / f"{Path(name).stem}_recon.wav", est)
        refs.append(ref)
        ests.append(est)
    rep = recon_report(refs, ests, cfg.distances, [str(n) for n in names])
    records = [{"type": "file", **row} for row in rep.per_file] + [{"type": "summary", **rep.to_record()}]
    write_records(out / "reconstruct.jsonl", records)
    return records


def run_probe(checkpoint, out, clips: int = 160) -> list[dict]:
    from .evaluation.ablation import role_features
    from .evaluation.probe import holdout_split, linear_probe
    from .model.checkpoint import load_tokenizer

    model, cfg, blob = load_tokenizer(checkpoint)
    records = []
    for task in synth.PROBE_TASKS:
        ls = synth.probe_task(task, clips, cfg.rng(f"ablation-probe-{task}"))
        feats = role_features(model, ls.waves)
        split = holdout_split(len(ls.labels), seed=cfg.seed)
        for role, f in feats.items():
            r = linear_probe(f, ls.labels, split, task, role, seed=cfg.seed)
            records.append({"task": task, "role": role, "metric": r.metric, "score": r.score, "config_hash": blob["config_hash"]})
    write_records(Path(out) / "probe.jsonl", records)
    return records


def run_ablate(checkpoint, out, clips: int = 160) -> list[dict]:
    from .evaluation.ablation import ablation_dataset, ablation_report, format_table
    from .model.checkpoint import load_tokenizer

    model, cfg, blob = load_tokenizer(checkpoint)
    rows = ablation_report(model, ablation_dataset(cfg, clips), cfg.distances, seed=cfg.seed)
    print(format_table(rows))
    records = [{**r.to_record(), "config_hash": blob["config_hash"], "seed": cfg.seed} for r in rows]
    write_records(Path(out) / "ablation.jsonl", records)
    return records


def _downstream_path(kind: str, checkpoint, explicit) -> Path:
    return Path(explicit) if explicit else cache_dir() / f"{kind}_{_file_hash(checkpoint)}.pt"


def obtain_denoiser(checkpoint, path=None):
    """Load a denoiser, or train one on synthetic noisy/clean pairs and store it."""
    from .downstream import Denoiser, se_training_pairs, train_denoiser
    from .model.checkpoint import load_tokenizer, read_checkpoint, write_checkpoint

    model, cfg, blob = load_tokenizer(checkpoint)
    path = _downstream_path("denoiser", checkpoint, path)
    if path.is_file():
        d = read_checkpoint(path)
        if d.get("kind") != "denoiser" or d.get("semantic_hash") != blob["semantic_hash"]:
            raise DataError(f"{path} is not a denoiser for this tokenizer")
        den = Denoiser(d["dim"], d["layers"], d["heads"])
        den.load_state_dict(d["weights"])
        return model, cfg, den.eval()
    den = train_denoiser(model, se_training_pairs(cfg), cfg)
    write_checkpoint(
        path,
        {
            "kind": "denoiser",
            "config_hash": cfg.hash(),
            "seed": cfg.seed,
            "semantic_hash": blob["semantic_hash"],
            "dim": den.dim,
            "layers": den.layers,
            "heads": den.heads,
            "weights": den.state_dict(),
        },
    )
    return model, cfg, den


def run_enhance(checkpoint, names, waves, out, denoiser=None) -> list[dict]:
    from .downstream import enhance, mix_at_snr, reconstruct
    from .downstream.enhance import noise_clip
    from .evaluation import stft_distance

    model, cfg, den = obtain_denoiser(checkpoint, denoiser)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    rng = cfg.rng("cli-enhance-noise")
    for name, w in zip(names, waves):
        w = _frame_trim(w, model.samples_per_frame)
        rec = {"id": str(name)}
        if str(name).startswith("synth_"):
            spec = mix_at_snr(w, Waveform(noise_clip(rng, len(w)), w.sample_rate), cfg.denoiser.snr_db)
            noisy = spec.mixed
            enhanced = enhance(noisy, den, model)
            rec.update(
                stft_distance_enhanced=stft_distance(w, enhanced, cfg.distances),
                stft_distance_noisy_recon=stft_distance(w, reconstruct(noisy, model), cfg.distances),
            )
        else:
            enhanced = enhance(w, den, model)
        save_wav(out / f"{Path(str(name)).stem}_enhanced.wav", enhanced)
        records.append(rec)
    write_records(out / "enhance.jsonl", records)
    return records


def obtain_flow(checkpoint, path=None, clips_per_class: int = 64):
    """Load a class-conditional flow model, or train one on the four sound classes."""
    from .downstream import FlowModel, train_flow, unified_latents
    from .model.checkpoint import load_tokenizer, read_checkpoint, write_checkpoint

    model, cfg, blob = load_tokenizer(checkpoint)
    path = _downstream_path("flow", checkpoint, path)
    if path.is_file():
        d = read_checkpoint(path)
        if d.get("kind") != "flow" or d.get("semantic_hash") != blob["semantic_hash"]:
            raise DataError(f"{path} is not a flow model for this tokenizer")
        fm = FlowModel(d["latent_dim"], cfg.flow)
        fm.load_state_dict(d["weights"])
        return model, cfg, fm.eval()
    ls = synth.sound_classes(4 * clips_per_class, cfg.rng("flow-data"), seconds=1.0)
    fm = train_flow(unified_latents(model, ls.waves), ls.labels, cfg)
    write_checkpoint(
        path,
        {
            "kind": "flow",
            "config_hash": cfg.hash(),
            "seed": cfg.seed,
            "semantic_hash": blob["semantic_hash"],
            "latent_dim": fm.latent_dim,
            "weights": fm.state_dict(),
        },
    )
    return model, cfg, fm


def run_generate(checkpoint, out, cond: int, seed: int, steps: int, cfg_scale: float, frames: int, flow=None) -> dict:
    from .downstream import sample_flow

    if cfg_scale < 0:
        raise ConfigError(f"guidance scale must be non-negative, got {cfg_scale}")
    model, cfg, fm = obtain_flow(checkpoint, flow)
    if not 0 <= cond < cfg.flow.num_classes:
        raise ConfigError(f"class must lie in [0, {cfg.flow.num_classes - 1}]")
    (w,) = sample_flow([cond], fm, model, frames, steps, cfg_scale, seed)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    wav = out / f"generated_c{cond}_s{seed}.wav"
    save_wav(wav, w)
    rec = {
        "wav": str(wav),
        "cond": cond,
        "class_name": synth.SOUND_CLASSES[cond],
        "seed": seed,
        "steps": steps,
        "cfg": cfg_scale,
        "frames": frames,
        "config_hash": cfg.hash(),
    }
    write_records(out / f"generated_c{cond}_s{seed}.jsonl", [rec])
    return rec


def read_metrics_log(path: str | Path) -> tuple[dict, list[dict]]:
    """Header and step records of a metrics log; malformed lines are skipped with a warning."""
    header, steps = {}, []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            if not isinstance(rec, dict):
                raise ValueError("not an object")
        except ValueError as exc:
            log.warning("%s:%d: skipping malformed line (%s)", path, n, exc)
            continue
        kind = rec.pop("type", "step")
        if kind == "header":
            header = rec
        elif "step" in rec:
            steps.append(rec)
        else:
            log.warning("%s:%d: skipping record without a step", path, n)
    return header, steps


def summarize(steps: list[dict]) -> dict[str, dict]:
    metrics = sorted({k for r in steps for k, v in r.items() if k != "step" and isinstance(v, (int, float))})
    out = {}
    for k in metrics:
        vals = np.array([r[k] for r in steps if isinstance(r.get(k), (int, float))], dtype=np.float64)
        out[k] = {
            "count": int(vals.size),
            "first": float(vals[0]),
            "last": float(vals[-1]),
            "min": float(vals.min()),
            "max": float(vals.max()),
            "mean": float(vals.mean()),
            "total": float(vals.sum()),
        }
    return out


def run_report(logs: list[str | Path], out: str | Path, plot: bool = False) -> dict:
    """Per-log summary table plus optional curves (several logs overlay on shared axes)."""
    if not logs:
        raise DataError("report needs at least one metrics log")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    parsed = {str(p): read_metrics_log(p) for p in logs}
    summary = {name: summarize(steps) for name, (_, steps) in parsed.items()}
    records = [
        {"log": name, "config_hash": parsed[name][0].get("config_hash"), "metric": k, **stats}
        for name, table in summary.items()
        for k, stats in table.items()
    ]
    write_records(out / "summary.jsonl", records)
    lines = [f"{'log':30s} {'metric':20s} {'count':>6s} {'first':>10s} {'last':>10s} {'min':>10s} {'mean':>10s}"]
    for r in records:
        lines.append(
            f"{Path(r['log']).name[:30]:30s} {r['metric'][:20]:20s} {r['count']:6d} "
            f"{r['first']:10.4g} {r['last']:10.4g} {r['min']:10.4g} {r['mean']:10.4g}"
        )
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    result = {"summary": summary, "plots": []}
    if plot:
        result["plots"] = _plot_curves(parsed, out)
    return result


def _plot_curves(parsed: dict, out: Path) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    metrics = sorted({k for _, steps in parsed.values() for r in steps for k in r if k != "step"})
    paths = []
    for k in metrics:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for name, (_, steps) in parsed.items():
            pts = [(r["step"], r[k]) for r in steps if isinstance(r.get(k), (int, float)) and math.isfinite(r[k])]
            if pts:
                x, y = zip(*pts)
                ax.plot(x, y, label=Path(name).parent.name or Path(name).stem, linewidth=1)
        ax.set_xlabel("step")
        ax.set_ylabel(k)
        ax.legend(fontsize=7)
        fig.tight_layout()
        p = out / f"curve_{k.replace('/', '_')}.png"
        fig.savefig(p, dpi=100)
        plt.close(fig)
        paths.append(str(p))
    return paths


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="preset name (desk, paper) or YAML file")
    common.add_argument("--manifest", help="manifest (JSONL) produced by ingest")
    common.add_argument("--checkpoint", help="tokenizer checkpoint")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", default=".", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="fusetok", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic WAV corpus and listing")
    s.add_argument("--n", type=int, default=24)
    s.add_argument("--seconds", type=float, default=2.0)

    s = sub.add_parser("ingest", parents=[common], help="build a manifest from a directory or listing")
    s.add_argument("source")

    s = sub.add_parser("train", parents=[common], help="train the tokenizer")
    s.add_argument("--steps", type=int)
    s.add_argument("--resume", help="training checkpoint to continue from")
    s.add_argument("--dry-run", action="store_true", help="write config and log header only")

    for name, hlp in (("reconstruct", "encode and decode audio"), ("enhance", "latent-space speech enhancement")):
        s = sub.add_parser(name, parents=[common], help=hlp)
        s.add_argument("inputs", nargs="*", help="WAV files (default: synthetic held-out clips)")
        s.add_argument("--clips", type=int, default=8)
        if name == "enhance":
            s.add_argument("--denoiser", help="denoiser checkpoint (trained and cached if absent)")

    for name, hlp in (("probe", "linear probes per feature role"), ("ablate", "semantic/acoustic/unified table")):
        s = sub.add_parser(name, parents=[common], help=hlp)
        s.add_argument("--clips", type=int, default=160)

    s = sub.add_parser("generate", parents=[common], help="class-conditional generation")
    s.add_argument("--class", dest="cond", type=int, default=0, help=f"class id, one of {list(synth.SOUND_CLASSES)}")
    s.add_argument("--steps", type=int)
    s.add_argument("--cfg-scale", type=float)
    s.add_argument("--frames", type=int, default=25)
    s.add_argument("--flow", help="flow checkpoint (trained and cached if absent)")

    s = sub.add_parser("report", parents=[common], help="summarize and plot metrics logs")
    s.add_argument("logs", nargs="+")
    s.add_argument("--plot", action="store_true")
    return p


def _need(args, name):
    if getattr(args, name) is None:
        raise ConfigError(f"--{name} is required for {args.command}")
    return getattr(args, name)


def dispatch(args) -> None:
    if args.command == "synth":
        print(run_synth(args.out, args.n, args.seed or 0, args.seconds))
    elif args.command == "ingest":
        out = args.out if args.out != "." else "manifest.jsonl"
        m = run_ingest(args.source, out)
        print(f"{len(m.records)} records, {len(m.errors)} errors -> {out}")
    elif args.command == "train":
        cfg = load_config(args.config, args.seed)
        print(run_train(cfg, args.manifest, args.out, args.steps, args.resume, args.dry_run))
    elif args.command in ("reconstruct", "enhance"):
        ckpt = _need(args, "checkpoint")
        cfg = load_config(args.config, args.seed)
        names, waves = _inputs(args, cfg)
        if args.command == "reconstruct":
            recs = run_reconstruct(ckpt, names, waves, args.out)
        else:
            recs = run_enhance(ckpt, names, waves, args.out, args.denoiser)
        for r in recs:
            print(json.dumps(r))
    elif args.command == "probe":
        for r in run_probe(_need(args, "checkpoint"), args.out, args.clips):
            print(json.dumps(r))
    elif args.command == "ablate":
        run_ablate(_need(args, "checkpoint"), args.out, args.clips)
    elif args.command == "generate":
        from .model.checkpoint import read_checkpoint

        ckpt = _need(args, "checkpoint")
        fc = RunConfig.from_dict(read_checkpoint(ckpt)["config"]).flow
        steps = fc.sample_steps if args.steps is None else args.steps
        scale = fc.cfg_scale if args.cfg_scale is None else args.cfg_scale
        print(json.dumps(run_generate(ckpt, args.out, args.cond, args.seed or 0, steps, scale, args.frames, args.flow)))
    elif args.command == "report":
        res = run_report(args.logs, args.out, args.plot)
        print((Path(args.out) / "summary.txt").read_text(), end="")
        for p in res["plots"]:
            print(p)


def main(argv=None) -> int:
    from .downstream import FlowError
    from .evaluation import MetricError
    from .model.checkpoint import CheckpointError
    from .model.tokenizer import ModelError
    from .training import NumericError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ManifestError, DSPError, CheckpointError, ModelError, MetricError, FlowError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
