"""Train the desk tokenizer, then compare semantic, acoustic and unified features.

Each role's features are decoded directly by the trained decoder and probed
with a linear classifier on the four synthetic attribute tasks. With the
default 300 steps this takes a couple of minutes on one CPU core; the
acceptance suite uses the full 5000.

    python3 demos/02_train_and_ablate.py [steps] [out_dir]
"""

import sys
import time
from pathlib import Path

from fusetok import synth
from fusetok.config import desk
from fusetok.evaluation import ablation_dataset, ablation_report
from fusetok.evaluation.ablation import format_table
from fusetok.model.checkpoint import tokenizer_payload, write_checkpoint
from fusetok.training import train


def main(steps: int = 300, out: str = "demo_out"):
    cfg = desk()
    cfg.optim.total_steps = steps
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = synth.training_corpus(cfg.data.corpus_clips, cfg.rng("corpus"), cfg.data.clip_seconds)

    t0 = time.perf_counter()

    def progress(s):
        if s.step % 50 == 0 or s.step == steps:
            m = s.last_metrics
            print(f"step {s.step:5d}  total {m['total']:7.2f}  l_mel {m['l_mel']:.3f}  l_sem {m['l_sem']:.3f}  "
                  f"d {m['l_disc']:.2f}  ({time.perf_counter() - t0:.0f}s)")

    state = train(cfg, corpus, log_path=out / "metrics.jsonl", callback=progress)
    ckpt = write_checkpoint(out / "tokenizer.pt", tokenizer_payload(state.model, cfg, step=state.step))
    print(f"saved {ckpt}")

    rows = ablation_report(state.model.eval(), ablation_dataset(cfg, clips_per_task=80), cfg.distances, seed=cfg.seed)
    print(format_table(rows))
    d = {r.role: r.recon.mel_distance for r in rows}
    print(f"semantic/unified mel distance {d['semantic'] / d['unified']:.2f}, "
          f"acoustic/unified {d['acoustic'] / d['unified']:.2f}")


if __name__ == "__main__":
    args = sys.argv[1:]
    main(int(args[0]) if args else 300, args[1] if len(args) > 1 else "demo_out")
