"""Report rendering: image montages, matplotlib figures and CSV summaries."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from evnat.errors import CountMismatchError, ReportWriteFailureError, SizeMismatchError  # noqa: E402
from evnat.ingest.pnm import write_pnm  # noqa: E402
from evnat.ingest.types import ImageBuffer  # noqa: E402
from evnat.nn.checkpoint import atomic_write  # noqa: E402

GUTTER = 2
_PNG_META = {"Software": None}


def grid_shape(n: int, h: int, w: int, rows: int = 3, gutter: int = GUTTER) -> tuple[int, int]:
    """Montage size: ``rows*h + (rows+1)*gutter`` by ``n*w + (n+1)*gutter``.

    Gutters separate neighbouring tiles and also frame the outer border.
    """
    return rows * h + (rows + 1) * gutter, n * w + (n + 1) * gutter


def _rgb(img: ImageBuffer) -> np.ndarray:
    px = img.to_uint8().pixels
    return np.repeat(px, 3, axis=2) if px.shape[2] == 1 else px


def montage(rows: Sequence[Sequence[ImageBuffer]], gutter: int = GUTTER) -> ImageBuffer:
    counts = {len(r) for r in rows}
    if len(counts) != 1 or 0 in counts:
        raise CountMismatchError(f"rows hold {sorted(len(r) for r in rows)} images; need equal non-zero counts")
    sizes = {(im.height, im.width) for r in rows for im in r}
    if len(sizes) != 1:
        raise SizeMismatchError(f"tiles have differing sizes {sorted(sizes)}")
    (h, w), = sizes
    n = counts.pop()
    H, W = grid_shape(n, h, w, len(rows), gutter)
    canvas = np.full((H, W, 3), 255, dtype=np.uint8)
    for r, row in enumerate(rows):
        for c, im in enumerate(row):
            y = gutter + r * (h + gutter)
            x = gutter + c * (w + gutter)
            canvas[y : y + h, x : x + w] = _rgb(im)
    return ImageBuffer(canvas)


def render_grid(sources, generated, targets, path) -> ImageBuffer:
    """Write a 3-row PPM montage: sources, generated images, targets."""
    if not (len(sources) == len(generated) == len(targets)) or not sources:
        raise CountMismatchError(
            f"need equal, non-zero counts; got {len(sources)}/{len(generated)}/{len(targets)}"
        )
    img = montage([sources, generated, targets])
    try:
        atomic_write(path, write_pnm(img))
    except OSError as exc:
        raise ReportWriteFailureError(f"cannot write grid to {path}: {exc}") from exc
    return img


def _savefig(fig, path) -> None:
    try:
        fig.savefig(path, dpi=120, metadata=_PNG_META)
    except OSError as exc:
        raise ReportWriteFailureError(f"cannot write figure {path}: {exc}") from exc
    finally:
        plt.close(fig)


def plot_accuracies(report: dict, path) -> None:
    labels = ["raw", "naturalized", "spiking"]
    values = [100 * report["accuracy_raw"], 100 * report["accuracy_naturalized"], 100 * report["accuracy_spiking"]]
    if report.get("accuracy_cross") is not None:
        labels.append("cross (spiking net)")
        values.append(100 * report["accuracy_cross"])
    fig, ax = plt.subplots(figsize=(5, 3.2))
    bars = ax.bar(labels, values, color=["#4c72b0", "#55a868", "#c44e52", "#8172b2"][: len(labels)])
    for b, v in zip(bars, values):
        ax.text(b.get_x() + b.get_width() / 2, v + 1, f"{v:.2f}%", ha="center", va="bottom", fontsize=8)
    ax.set_ylim(0, 110)
    ax.set_ylabel("test accuracy (%)")
    ax.set_title("Classification accuracy by input")
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    _savefig(fig, path)


def plot_training(gan_log, classifier_logs: dict, path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    if gan_log:
        ep = [r.epoch for r in gan_log]
        ax1.plot(ep, [r.d_loss for r in gan_log], label="D loss")
        ax1.plot(ep, [r.g_loss for r in gan_log], label="G loss")
        ax1b = ax1.twinx()
        ax1b.plot(ep, [r.val_l1 for r in gan_log], "k--", label="val L1")
        ax1b.set_ylabel("val L1")
        ax1.legend(loc="upper right", fontsize=7)
    ax1.set_xlabel("epoch")
    ax1.set_title("cGAN training")
    for name, records in classifier_logs.items():
        ax2.plot([r.epoch for r in records], [r.loss for r in records], label=name)
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("cross-entropy")
    ax2.set_title("Classifier training")
    if classifier_logs:
        ax2.legend(fontsize=7)
    fig.tight_layout()
    _savefig(fig, path)


def write_summary_csv(report: dict, path) -> None:
    rows = [
        ("raw", "raw", report["accuracy_raw"]),
        ("spiking", "spiking", report["accuracy_spiking"]),
        ("naturalized", "raw", report["accuracy_naturalized"]),
    ]
    if report.get("accuracy_cross") is not None:
        rows.append(("cross", "spiking", report["accuracy_cross"]))
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["input", "classifier", "accuracy", "accuracy_pct"])
            for name, clf, acc in rows:
                w.writerow([name, clf, repr(acc), f"{100 * acc:.2f}"])
    except OSError as exc:
        raise ReportWriteFailureError(f"cannot write {path}: {exc}") from exc
