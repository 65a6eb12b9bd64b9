"""Self-describing checkpoint container.

A checkpoint is a torch-serialized dict::

    {"format": "fusetok", "version": 1, "kind": ..., "config": {...},
     "config_hash": ..., "semantic_hash": ..., "step": int, "model": state_dict, ...}

Writes are atomic (temp file + rename). Loading recomputes the frozen
encoder hash from the stored weights and refuses a mismatch.
"""

from __future__ import annotations

import os
import pickle
import tempfile
from pathlib import Path

import torch

from ..config import RunConfig
from .tokenizer import Tokenizer, parameter_hash

FORMAT = "fusetok"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def write_checkpoint(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = {"format": FORMAT, "version": VERSION, **payload}
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    os.close(fd)
    try:
        torch.save(blob, tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    return path


def _semantic_state(model_state: dict) -> dict:
    return {k[len("semantic.") :]: v for k, v in model_state.items() if k.startswith("semantic.")}


def read_checkpoint(path: str | Path) -> dict:
    try:
        blob = torch.load(Path(path), map_location="cpu", weights_only=False)
    except (OSError, RuntimeError, EOFError, pickle.UnpicklingError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if not isinstance(blob, dict) or blob.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} checkpoint")
    if blob.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {blob.get('version')}")
    if "model" in blob:
        cfg = RunConfig.from_dict(blob["config"])
        probe = Tokenizer(cfg)
        probe.semantic.load_state_dict(_semantic_state(blob["model"]))
        found = parameter_hash(probe.semantic)
        if found != blob.get("semantic_hash"):
            raise CheckpointError(
                f"frozen semantic encoder hash mismatch: recorded {blob.get('semantic_hash')}, weights hash to {found}"
            )
    return blob


def tokenizer_payload(model: Tokenizer, cfg: RunConfig, step: int = 0, kind: str = "tokenizer") -> dict:
    return {
        "kind": kind,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "semantic_hash": model.semantic_hash(),
        "step": step,
        "model": model.state_dict(),
    }


def load_tokenizer(path: str | Path) -> tuple[Tokenizer, RunConfig, dict]:
    blob = read_checkpoint(path)
    if "model" not in blob:
        raise CheckpointError(f"{path} holds no tokenizer weights")
    cfg = RunConfig.from_dict(blob["config"])
    model = Tokenizer(cfg)
    model.load_state_dict(blob["model"])
    model.eval()
    return model, cfg, blob
