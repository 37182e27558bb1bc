"""Paired dataset directory layout.

::

    <root>/<split>/<class>/<id>.src.pgm   event-derived source, 1 channel
    <root>/<split>/<class>/<id>.tgt.ppm   raw target, 3 channels

Class indices come from the sorted union of class directory names across
all splits, so the same class gets the same index in train, val and test.
"""

from __future__ import annotations

from pathlib import Path

from evnat.errors import MissingCounterpartError, SizeMismatchError
from evnat.ingest.pnm import read_pnm_file, write_pnm_file
from evnat.ingest.types import ImageBuffer, PairedSample

SPLITS = ("train", "val", "test")
SRC_SUFFIX = ".src.pgm"
TGT_SUFFIX = ".tgt.ppm"


def class_names(root) -> list[str]:
    root = Path(root)
    names = set()
    for split in SPLITS:
        d = root / split
        if d.is_dir():
            names.update(p.name for p in d.iterdir() if p.is_dir())
    return sorted(names)


def sample_paths(root, split: str, class_name: str, sample_id: str) -> tuple[Path, Path]:
    d = Path(root) / split / class_name
    return d / f"{sample_id}{SRC_SUFFIX}", d / f"{sample_id}{TGT_SUFFIX}"


def load_paired_dataset(root, split: str) -> list[PairedSample]:
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    root = Path(root)
    classes = class_names(root)
    split_dir = root / split
    samples: list[PairedSample] = []
    if not split_dir.is_dir():
        return samples
    for class_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
        label = classes.index(class_dir.name)
        files = [p.name for p in class_dir.iterdir() if p.is_file()]
        srcs = {f[: -len(SRC_SUFFIX)] for f in files if f.endswith(SRC_SUFFIX)}
        tgts = {f[: -len(TGT_SUFFIX)] for f in files if f.endswith(TGT_SUFFIX)}
        unmatched = sorted(srcs ^ tgts)
        if unmatched:
            raise MissingCounterpartError(f"{class_dir}: no counterpart for {unmatched[0]!r}")
        for sid in sorted(srcs):
            src_path, tgt_path = sample_paths(root, split, class_dir.name, sid)
            source = read_pnm_file(src_path)
            target = read_pnm_file(tgt_path)
            if (source.height, source.width) != (target.height, target.width):
                raise SizeMismatchError(
                    f"{sid}: source {source.width}x{source.height} vs target {target.width}x{target.height}"
                )
            samples.append(PairedSample(source, target, label, sid, class_dir.name))
    return samples


def write_pair(root, split: str, class_name: str, sample_id: str,
               source: ImageBuffer, target: ImageBuffer) -> tuple[Path, Path]:
    src_path, tgt_path = sample_paths(root, split, class_name, sample_id)
    if source.channels != 1 or target.channels != 3:
        raise ValueError("pairs are 1-channel source, 3-channel target")
    write_pnm_file(src_path, source)
    write_pnm_file(tgt_path, target)
    return src_path, tgt_path
