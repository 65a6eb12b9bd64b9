"""Speech enhancement and class-conditional generation in the unified latent space.

Needs a tokenizer checkpoint, e.g. the one demo 02 writes:

    python3 demos/03_downstream.py demo_out/tokenizer.pt [out_dir]

A small transformer learns to map noisy latents (5 dB SNR) onto clean ones;
enhanced audio is the decoded output. A flow-matching model is then fit on
latents of four synthetic sound classes and sampled with classifier-free
guidance. WAVs land in out_dir.
"""

import sys
from pathlib import Path

import numpy as np

from fusetok import synth
from fusetok.downstream import (
    enhance,
    reconstruct,
    sample_flow,
    se_pairs,
    se_training_pairs,
    train_denoiser,
    train_flow,
    unified_latents,
)
from fusetok.dsp import save_wav
from fusetok.evaluation import semantic_fad, stft_distance
from fusetok.model.checkpoint import load_tokenizer


def main(checkpoint: str, out: str = "demo_out"):
    model, cfg, _ = load_tokenizer(checkpoint)
    model.eval()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    den = train_denoiser(model, se_training_pairs(cfg), cfg)
    print(f"denoiser loss {np.mean(den.history[:20]):.4f} -> {np.mean(den.history[-20:]):.4f}")
    wins = 0
    for i, p in enumerate(se_pairs(10, cfg.rng("se-heldout"))):
        e, r = enhance(p.mixed, den, model), reconstruct(p.mixed, model)
        de, dr = stft_distance(p.clean, e), stft_distance(p.clean, r)
        wins += de < dr
        print(f"clip {i}: stft distance noisy recon {dr:.3f}, enhanced {de:.3f}")
        if i < 3:
            save_wav(out / f"se_{i}_noisy.wav", p.mixed)
            save_wav(out / f"se_{i}_enhanced.wav", e)
    print(f"enhancement helped on {wins}/10 clips")

    data = synth.sound_classes(200, cfg.rng("flow-toy"))
    flow = train_flow(unified_latents(model, data.waves), data.labels, cfg)
    print(f"flow loss {np.mean(flow.history[:100]):.3f} -> {np.mean(flow.history[-100:]):.3f}")
    labels = [k for k in range(4) for _ in range(10)]
    generated = sample_flow(labels, flow, model, frames=25, seed=cfg.seed)
    for k in range(4):
        save_wav(out / f"gen_{synth.SOUND_CLASSES[k]}.wav", generated[10 * k])
    # distance to fresh real clips, against real-vs-real as a reference level
    real = synth.sound_classes(40, cfg.rng("flow-fad-ref")).waves
    print(f"semantic FAD generated vs real {semantic_fad(model, real, generated):.3f}, "
          f"real vs real {semantic_fad(model, real, data.waves[:40]):.3f}")
    print(f"wrote samples for {list(synth.SOUND_CLASSES)} to {out}")


if __name__ == "__main__":
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    main(*sys.argv[1:3])
