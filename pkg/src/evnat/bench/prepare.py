"""Build paired (event-derived source, raw target) datasets on disk.

Supported combinations:

============  ===========================================
dataset       modes
============  ===========================================
shapes        canny, poisson, soft_edges (needs ``edges_dir``)
cifar10       canny, poisson, soft_edges (needs ``edges_dir``)
linnaeus5     canny, poisson, soft_edges (needs ``edges_dir``)
cifar10dvs    dvs_timesurface (needs AEDAT files + mapping)
============  ===========================================

Soft-edge maps are looked up as ``<edges_dir>/<split>/<class>/<id>.pgm``,
mirroring the output layout.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from evnat.bench.manifest import RunManifest, file_sha256
from evnat.bench.synthetic import SHAPE_CLASSES, make_shape_image, shape_dataset
from evnat.edges import CannyParams, canny_array, load_soft_edges, LUMA
from evnat.errors import MissingInputError, SizeMismatchError, UnsupportedCombinationError
from evnat.ingest.aedat import DVS128, read_aedat_file
from evnat.ingest.cifar import CLASSES as CIFAR_CLASSES, parse_cifar10_arrays
from evnat.ingest.paired import write_pair
from evnat.ingest.pnm import read_pnm_file
from evnat.ingest.types import EventStream, ImageBuffer, PairedSample, StorageKind
from evnat.rng import derive_seed, make_rng
from evnat.spikes import TimeSurfaceConfig, poisson_encode, spike_train_to_events, time_surface

log = logging.getLogger(__name__)

DATASETS = ("shapes", "cifar10", "cifar10dvs", "linnaeus5")
MODES = ("dvs_timesurface", "canny", "soft_edges", "poisson")
LINNAEUS_KEEP = ("bird", "dog")


@dataclass
class PrepareOptions:
    # poisson mode
    num_steps: int = 4
    max_rate: float = 0.35
    step_duration_us: int = 1000
    # canny mode
    canny_sigma: float = 1.0
    canny_low: float = 0.1
    canny_high: float = 0.3
    # dvs_timesurface mode; window_us=0 integrates the whole recording
    window_us: int = 0
    # output geometry
    size: int = 32
    # shapes dataset
    shapes_per_class: dict = field(default_factory=lambda: {"train": 80, "val": 20, "test": 40})
    # linnaeus5 dataset
    linnaeus_classes: tuple = LINNAEUS_KEEP
    linnaeus_split: dict = field(default_factory=lambda: {"train": 800, "val": 400, "test": 400})
    # cifar10: optional cap per split (0 = all)
    cifar_limit: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "PrepareOptions":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown prepare options {sorted(unknown)}")
        return cls(**d)


def _gray(target: ImageBuffer) -> np.ndarray:
    return target.as_float_array() @ LUMA


def _to_pgm(values01: np.ndarray) -> ImageBuffer:
    return ImageBuffer(np.round(np.clip(values01, 0, 1) * 255).astype(np.uint8)[:, :, None])


def canny_source(target: ImageBuffer, opts: PrepareOptions) -> ImageBuffer:
    params = CannyParams(opts.canny_sigma, opts.canny_low, opts.canny_high)
    return _to_pgm(canny_array(_gray(target), params).astype(np.float64))


def poisson_source(target: ImageBuffer, opts: PrepareOptions, seed: int) -> ImageBuffer:
    """Rate-code the luminance, turn spikes into events and integrate them."""
    gray8 = ImageBuffer(np.round(_gray(target) * 255).astype(np.uint8)[:, :, None])
    train = poisson_encode(gray8, opts.num_steps, opts.max_rate, seed)
    events = spike_train_to_events(train, opts.step_duration_us)
    cfg = TimeSurfaceConfig(0, opts.num_steps * opts.step_duration_us)
    return _to_pgm(time_surface(events, cfg).pixels[:, :, 0])


def block_downsample(arr: np.ndarray, size: int) -> np.ndarray:
    """Area-average an (H, W[, C]) array to ``size`` x ``size`` (integer factors only)."""
    h, w = arr.shape[:2]
    if h % size or w % size:
        raise SizeMismatchError(f"{h}x{w} cannot be block-averaged to {size}x{size}")
    fy, fx = h // size, w // size
    if fy == fx == 1:
        return arr
    shape = (size, fy, size, fx) + arr.shape[2:]
    return arr.reshape(shape).mean(axis=(1, 3))


def dvs_source(stream: EventStream, opts: PrepareOptions) -> ImageBuffer:
    end = int(stream.t[-1]) + 1 if len(stream) else 1
    window = opts.window_us or end
    surf = time_surface(stream, TimeSurfaceConfig(0, window)).pixels[:, :, 0]
    small = block_downsample(surf, opts.size)
    peak = small.max()
    return _to_pgm(small / peak if peak > 0 else small)


# -- dataset readers: yield (split, class_name, sample_id, target ImageBuffer) ------


def _iter_shapes(opts, seed):
    for split, n in opts.shapes_per_class.items():
        for sid, label, img in shape_dataset(n, seed, opts.size, tag=split[:2]):
            yield split, SHAPE_CLASSES[label], sid, img


def _cifar_batches(input_dir: Path):
    files = {
        "train": sorted(input_dir.glob("data_batch_*.bin")),
        "test": sorted(input_dir.glob("test_batch*.bin")),
    }
    if not files["train"] and not files["test"]:
        raise MissingInputError(f"no CIFAR-10 batch files in {input_dir}")
    out = {}
    for split, paths in files.items():
        if not paths:
            continue
        labels, images = zip(*(parse_cifar10_arrays(p.read_bytes()) for p in paths))
        out[split] = (np.concatenate(labels), np.concatenate(images))
    return out, [p for ps in files.values() for p in ps]


def _iter_cifar(input_dir: Path, opts):
    batches, _ = _cifar_batches(input_dir)
    for split, (labels, images) in batches.items():
        n = len(labels) if not opts.cifar_limit else min(opts.cifar_limit, len(labels))
        for i in range(n):
            img = ImageBuffer(block_downsample(images[i].astype(np.float64), opts.size).round().astype(np.uint8))
            yield split, CIFAR_CLASSES[labels[i]], f"{split}_{i:05d}", img


def _resize_target(img: ImageBuffer, size: int) -> ImageBuffer:
    if img.channels == 1:
        img = ImageBuffer(np.repeat(img.pixels, 3, axis=2))
    if (img.height, img.width) == (size, size):
        return img
    arr = block_downsample(img.pixels.astype(np.float64), size)
    return ImageBuffer(np.round(arr).astype(np.uint8))


def _linnaeus_files(input_dir: Path, opts):
    found = {}
    for path in sorted(input_dir.rglob("*.ppm")):
        found.setdefault(path.parent.name, []).append(path)
    keep = {c: sorted(found.get(c, []), key=lambda p: p.relative_to(input_dir).as_posix())
            for c in opts.linnaeus_classes}
    need = sum(opts.linnaeus_split.values())
    for cls, paths in keep.items():
        if len(paths) < need:
            raise MissingInputError(
                f"linnaeus5 class {cls!r} has {len(paths)} images, the splits need {need}"
            )
    return keep


def _iter_linnaeus(input_dir: Path, opts):
    for cls, paths in _linnaeus_files(input_dir, opts).items():
        pos = 0
        for split in ("train", "val", "test"):
            n = opts.linnaeus_split.get(split, 0)
            for p in paths[pos : pos + n]:
                sid = p.name[: -len(".ppm")]
                yield split, cls, sid, _resize_target(read_pnm_file(p), opts.size)
            pos += n


def read_dvs_mapping(path) -> list[tuple[str, str, int]]:
    """Rows of ``aedat_file,split,index`` pairing each recording with its CIFAR-10 image."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "aedat_file":
                continue
            name, split, index = row[0].strip(), row[1].strip(), int(row[2])
            if split not in ("train", "test"):
                raise ValueError(f"mapping split must be train or test, got {split!r}")
            rows.append((name, split, index))
    return rows


# -- driver ---------------------------------------------------------------------------


def prepare(dataset: str, mode: str, out_root, seed: int = 0, input_dir=None, edges_dir=None,
            mapping=None, aedat_dir=None, options: PrepareOptions | None = None) -> RunManifest:
    """Write ``<out_root>/<split>/<class>/<id>.{src.pgm,tgt.ppm}`` plus ``manifest.json``."""
    opts = options or PrepareOptions()
    if dataset not in DATASETS:
        raise UnsupportedCombinationError(f"unknown dataset {dataset!r}")
    if mode not in MODES:
        raise UnsupportedCombinationError(f"unknown mode {mode!r}")
    if (dataset == "cifar10dvs") != (mode == "dvs_timesurface"):
        raise UnsupportedCombinationError(
            f"{mode} on {dataset}: dvs_timesurface needs AEDAT recordings, which only cifar10dvs provides"
        )
    if mode == "soft_edges" and edges_dir is None:
        raise MissingInputError("soft_edges mode needs a directory of precomputed edge maps")
    if dataset != "shapes" and input_dir is None:
        raise MissingInputError(f"{dataset} needs an input directory")

    out_root = Path(out_root)
    manifest = RunManifest(
        kind="prepare",
        config={"dataset": dataset, "mode": mode, "options": dataclasses.asdict(opts)},
        seeds={"seed": seed},
    )
    input_dir = Path(input_dir) if input_dir is not None else None

    if dataset == "cifar10dvs":
        items = _dvs_items(input_dir, aedat_dir, mapping, opts, manifest)
    else:
        if dataset == "shapes":
            samples = _iter_shapes(opts, seed)
        elif dataset == "cifar10":
            _, files = _cifar_batches(input_dir)
            for p in files:
                manifest.datasets[p.name] = file_sha256(p)
            samples = _iter_cifar(input_dir, opts)
        else:
            samples = _iter_linnaeus(input_dir, opts)
        items = _edge_items(samples, mode, opts, seed, edges_dir, dataset, manifest)

    count = 0
    for split, cls, sid, source, target in items:
        for path in write_pair(out_root, split, cls, sid, source, target):
            manifest.add_artifact(out_root, path)
        count += 1
    if count == 0:
        raise MissingInputError(f"no samples produced for {dataset}/{mode}")
    manifest.config["samples"] = count
    manifest.write(out_root)
    log.info("prepared %d pairs under %s", count, out_root)
    return manifest


def _edge_items(samples, mode, opts, seed, edges_dir, dataset, manifest):
    for split, cls, sid, target in samples:
        if mode == "canny":
            source = canny_source(target, opts)
        elif mode == "poisson":
            source = poisson_source(target, opts, derive_seed(seed, "poisson", dataset, split, cls, sid))
        else:
            path = Path(edges_dir) / split / cls / f"{sid}.pgm"
            if not path.exists():
                raise MissingInputError(f"no soft-edge map at {path}")
            manifest.datasets[f"edges/{split}/{cls}/{sid}.pgm"] = file_sha256(path)
            soft = load_soft_edges(path).pixels[:, :, 0]
            source = _to_pgm(block_downsample(soft, opts.size))
        yield split, cls, sid, source, target


def _dvs_items(input_dir, aedat_dir, mapping, opts, manifest):
    if mapping is None or aedat_dir is None:
        raise MissingInputError("cifar10dvs needs --aedat DIR and --mapping FILE (recording -> CIFAR index)")
    batches, files = _cifar_batches(input_dir)
    for p in files:
        manifest.datasets[p.name] = file_sha256(p)
    manifest.datasets[Path(mapping).name] = file_sha256(mapping)
    for name, split, index in read_dvs_mapping(mapping):
        path = Path(aedat_dir) / name
        if not path.exists():
            raise MissingInputError(f"recording {path} listed in mapping does not exist")
        if split not in batches or index >= len(batches[split][0]):
            raise MissingInputError(f"mapping refers to CIFAR {split}[{index}], which is not available")
        label = int(batches[split][0][index])
        stream = read_aedat_file(path, DVS128, label)
        manifest.datasets[f"aedat/{name}"] = file_sha256(path)
        target = ImageBuffer(batches[split][1][index])
        sid = Path(name).stem
        yield split, CIFAR_CLASSES[label], sid, dvs_source(stream, opts), _resize_target(target, opts.size)


def synthetic_pairs(n: int, mode: str, seed: int, tag: str, opts: PrepareOptions | None = None):
    """``n`` in-memory shape pairs cycling through the classes (no files written)."""
    opts = opts or PrepareOptions()
    pairs = []
    for i in range(n):
        label = i % len(SHAPE_CLASSES)
        kind = SHAPE_CLASSES[label]
        sid = f"{kind}_{tag}{i:05d}"
        target = make_shape_image(kind, make_rng(seed, "shape", tag, kind, i), opts.size)
        if mode == "canny":
            source = canny_source(target, opts)
        elif mode == "poisson":
            source = poisson_source(target, opts, derive_seed(seed, "poisson", "shapes", tag, kind, sid))
        else:
            raise UnsupportedCombinationError(f"synthetic pairs support canny and poisson, not {mode}")
        pairs.append(PairedSample(source, target, label, sid, kind))
    return pairs
