"""Audio file manifests stored as line-delimited JSON."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .dsp import DSPError, load_wav

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
AUDIO_SUFFIXES = (".wav",)


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Record:
    path: str
    duration: float
    sample_rate: int
    label: str | None = None
    split: str | None = None
    # set when the file's rate differs from the expected one; ingestion never resamples
    needs_resample: bool = False

    def validate(self, check_exists: bool = True) -> "Record":
        if self.duration <= 0:
            raise ManifestError(f"{self.path}: duration must be positive")
        if self.split is not None and self.split not in SPLITS:
            raise ManifestError(f"{self.path}: split {self.split!r} not in {SPLITS}")
        if check_exists and not Path(self.path).is_file():
            raise ManifestError(f"{self.path}: file not found")
        return self


@dataclass
class Manifest:
    records: list[Record] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def split(self, name: str) -> list[Record]:
        return [r for r in self.records if r.split == name or (name == "train" and r.split is None)]

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as f:
            for r in self.records:
                f.write(json.dumps({"type": "record", **asdict(r)}) + "\n")
            for e in self.errors:
                f.write(json.dumps({"type": "error", **e}) + "\n")
        return path

    @classmethod
    def load(cls, path: str | Path, check_exists: bool = True) -> "Manifest":
        m = cls()
        for n, line in enumerate(Path(path).read_text().splitlines(), 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{n}: not JSON ({exc.msg})") from None
            kind = d.pop("type", "record")
            if kind == "error":
                m.errors.append(d)
            else:
                try:
                    m.records.append(Record(**d).validate(check_exists))
                except TypeError as exc:
                    raise ManifestError(f"{path}:{n}: {exc}") from None
        return m


def _listing_entries(src: Path):
    for line in src.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() or None for p in line.split(",")]
        parts += [None] * (3 - len(parts))
        path = Path(parts[0])
        if not path.is_absolute():
            path = src.parent / path
        yield path, parts[1], parts[2]


def ingest(source: str | Path, expected_rate: int = 16000) -> Manifest:
    """Build a manifest from a directory of WAV files or a listing file.

    A listing holds one ``path[,label[,split]]`` per line. Unreadable files
    become error entries; the rest are still ingested.
    """
    src = Path(source)
    if src.is_dir():
        entries = [(p, None, None) for p in sorted(src.rglob("*")) if p.suffix.lower() in AUDIO_SUFFIXES]
    elif src.is_file():
        entries = list(_listing_entries(src))
    else:
        raise ManifestError(f"{src} does not exist")
    m = Manifest()
    if not entries:
        log.warning("no audio files found under %s", src)
        return m
    for path, label, split in entries:
        try:
            w = load_wav(path)
            if len(w) == 0:
                raise DSPError("no samples")
            rec = Record(str(path), len(w) / w.sample_rate, w.sample_rate, label, split, w.sample_rate != expected_rate)
            m.records.append(rec.validate())
        except (OSError, ValueError, EOFError) as exc:
            m.errors.append({"path": str(path), "error": f"{type(exc).__name__}: {exc}"})
    return m
