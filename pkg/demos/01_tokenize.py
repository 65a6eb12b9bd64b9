"""Tokenize a few synthetic clips and look at the fused latent.

Builds the desk tokenizer (frozen semantic encoder, briefly pretrained on the
synthetic attribute tasks), encodes clips of different lengths, checks the
25 Hz frame contract and decodes the fused latent back to audio. The decoder
is untrained here, so the audio itself is noise; demo 02 trains it.

    python3 demos/01_tokenize.py
"""

import math

import numpy as np
import torch

from fusetok import synth
from fusetok.config import desk
from fusetok.dsp import Waveform
from fusetok.model import fuse
from fusetok.model.pretrain import build_tokenizer


def main():
    cfg = desk()
    model = build_tokenizer(cfg).eval()
    n_sem = sum(p.numel() for p in model.semantic.parameters())
    n_ac = sum(p.numel() for p in model.acoustic.parameters())
    n_dec = sum(p.numel() for p in model.decoder.parameters())
    print(f"semantic encoder {n_sem} params (frozen, hash {model.semantic_hash()[:12]})")
    print(f"acoustic path    {n_ac} params, decoder {n_dec} params")

    rng = np.random.default_rng(0)
    for seconds in (0.3, 1.0, 2.37):
        w = Waveform(synth.speech_like(rng, int(seconds * 16000)), 16000)
        with torch.no_grad():
            z_sem, z_ac = model.encode_semantic(w), model.encode_acoustic(w)
            z = fuse(z_sem, z_ac)
            y = model.decode(z)
        t = z.shape[1]
        print(
            f"{seconds:5.2f} s -> {t:3d} frames (ceil(n/640) = {math.ceil(len(w) / 640)}), "
            f"decoded {len(y)} samples = {t} x 640; "
            f"|z_sem| {z_sem.data.norm(dim=-1).mean():.2f}  |z_ac| {z_ac.data.norm(dim=-1).mean():.2f}"
        )

    # the acoustic path is what sees the fine spectral detail: gain moves z_ac, not z_sem
    w = Waveform(synth.speech_like(rng, 16000), 16000)
    loud = Waveform(w.samples * 4, 16000)
    with torch.no_grad():
        d_sem = (model.encode_semantic(w).data - model.encode_semantic(loud).data).abs().mean()
        d_ac = (model.encode_acoustic(w).data - model.encode_acoustic(loud).data).abs().mean()
    print(f"x4 gain changes z_sem by {d_sem:.4f} and z_ac by {d_ac:.4f} on average")


if __name__ == "__main__":
    main()
