"""Run manifests: configuration, seeds, input fingerprints and outputs of a run."""

from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import evnat
from evnat.nn.checkpoint import atomic_write
from evnat.rng import ALGORITHM

MANIFEST_NAME = "manifest.json"


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_fingerprint(root, exclude=(MANIFEST_NAME,)) -> str:
    """Hash of every file's relative path and contents under ``root``."""
    root = Path(root)
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix()
        if rel in exclude or Path(rel).name.startswith(".tmp-"):
            continue
        h.update(rel.encode() + b"\0" + file_sha256(path).encode() + b"\n")
    return h.hexdigest()


def to_jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: to_jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), (str, int)):
        return obj.value
    if isinstance(obj, Path):
        return obj.as_posix()
    if hasattr(obj, "item"):
        return obj.item()
    return obj


@dataclass
class RunManifest:
    kind: str
    config: dict
    seeds: dict
    datasets: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    version: str = evnat.__version__
    rng_algorithm: str = ALGORITHM
    started: str = field(default_factory=lambda: dt.datetime.now(dt.timezone.utc).isoformat())
    finished: str = ""

    def add_artifact(self, root, path) -> None:
        rel = Path(os.path.relpath(path, root)).as_posix()
        self.artifacts[rel] = file_sha256(path)

    def write(self, root) -> Path:
        self.finished = dt.datetime.now(dt.timezone.utc).isoformat()
        path = Path(root) / MANIFEST_NAME
        payload = json.dumps(to_jsonable(dataclasses.asdict(self)), indent=2, sort_keys=True) + "\n"
        atomic_write(path, payload.encode())
        return path

    @classmethod
    def read(cls, root) -> "RunManifest":
        with open(Path(root) / MANIFEST_NAME) as fh:
            return cls(**json.load(fh))
