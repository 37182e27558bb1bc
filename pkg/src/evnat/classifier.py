"""VGG-style benchmark classifier.

Three blocks of ``[conv-bn-lrelu, conv-bn-lrelu, maxpool 2x2, dropout]``
followed by one dense layer producing logits. The same configuration is
used for every input modality; only ``input_channels`` changes.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from evnat.errors import (
    CheckpointFormatError,
    EmptyDatasetError,
    IndivisibleSpatialSizeError,
    LabelOutOfRangeError,
    ShapeMismatchError,
)
from evnat.nn import functional as F
from evnat.nn.checkpoint import load_checkpoint, save_checkpoint
from evnat.nn.modules import BatchNorm2d, Conv2d, Dropout, Flatten, LeakyReLU, Linear, MaxPool2d, Module, Sequential
from evnat.nn.optim import Adam
from evnat.nn.tensor import Tensor, no_grad
from evnat.rng import derive_seed, make_rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassifierConfig:
    input_channels: int = 3
    num_classes: int = 10
    conv_filters: tuple = (32, 64, 128)
    dropout_ps: tuple = (0.2, 0.3, 0.4)
    leaky_slope: float = 0.1
    flip: bool = True
    shift_pixels: int = 2
    image_size: int = 32
    batch_size: int = 32
    lr: float = 1e-3

    def __post_init__(self) -> None:
        object.__setattr__(self, "conv_filters", tuple(self.conv_filters))
        object.__setattr__(self, "dropout_ps", tuple(self.dropout_ps))
        if len(self.conv_filters) != 3 or len(self.dropout_ps) != 3:
            raise ValueError("the classifier has exactly 3 blocks: give 3 filter widths and 3 dropout rates")

    def with_channels(self, channels: int) -> "ClassifierConfig":
        return dataclasses.replace(self, input_channels=channels)


class Classifier(Module):
    def __init__(self, cfg: ClassifierConfig, seed: int = 0):
        if cfg.image_size % 8:
            raise IndivisibleSpatialSizeError(f"input side {cfg.image_size} is not divisible by 8")
        self.cfg = cfg
        rng = make_rng(seed, "classifier-init")
        layers = []
        cin = cfg.input_channels
        for b, (width, p) in enumerate(zip(cfg.conv_filters, cfg.dropout_ps)):
            for _ in range(2):
                layers += [Conv2d(cin, width, 3, 1, 1, bias=False, rng=rng), BatchNorm2d(width),
                           LeakyReLU(cfg.leaky_slope)]
                cin = width
            layers += [MaxPool2d(2), Dropout(p, seed=derive_seed(seed, "classifier-dropout", b))]
        side = cfg.image_size // 8
        layers += [Flatten(), Linear(cin * side * side, cfg.num_classes, rng=rng)]
        self.net = Sequential(*layers)

    def forward(self, x: Tensor) -> Tensor:
        expect = (self.cfg.input_channels, self.cfg.image_size, self.cfg.image_size)
        if x.shape[1:] != expect:
            raise ShapeMismatchError(f"classifier expects (N, {expect}), got {x.shape}")
        return self.net(x)


def build_classifier(cfg: ClassifierConfig, seed: int = 0) -> Classifier:
    return Classifier(cfg, seed)


def expected_parameter_count(cfg: ClassifierConfig) -> int:
    total = 0
    cin = cfg.input_channels
    for width in cfg.conv_filters:
        for _ in range(2):
            total += 9 * cin * width + 2 * width
            cin = width
    features = cin * (cfg.image_size // 8) ** 2
    return total + features * cfg.num_classes + cfg.num_classes


# -- augmentation --------------------------------------------------------------


def shift_image(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Translate an (H, W, C) array, filling the vacated border by reflection."""
    h, w = img.shape[:2]
    pad = max(abs(dy), abs(dx))
    if pad == 0:
        return img.copy()
    p = np.pad(img, ((pad, pad), (pad, pad), (0, 0)), mode="reflect")
    return p[pad - dy : pad - dy + h, pad - dx : pad - dx + w].copy()


def augment(image: np.ndarray, cfg: ClassifierConfig, seed) -> np.ndarray:
    """Random horizontal flip (p=0.5) and translation up to ``shift_pixels``."""
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed, "augment")
    img = np.asarray(image)
    if cfg.shift_pixels >= min(img.shape[:2]):
        raise ValueError("shift_pixels must be smaller than the image side")
    if cfg.flip and rng.random() < 0.5:
        img = img[:, ::-1]
    if cfg.shift_pixels:
        dy, dx = rng.integers(-cfg.shift_pixels, cfg.shift_pixels + 1, size=2)
        img = shift_image(img, int(dy), int(dx))
    return np.ascontiguousarray(img)


# -- training / evaluation -----------------------------------------------------


def _as_array(images) -> np.ndarray:
    """Accept (N, H, W, C) uint8 arrays or sequences of ImageBuffer."""
    if isinstance(images, np.ndarray):
        return images
    return np.stack([im.to_uint8().pixels for im in images]) if len(images) else np.zeros((0, 0, 0, 0), np.uint8)


def _to_input(batch: np.ndarray) -> np.ndarray:
    return (batch.astype(np.float32).transpose(0, 3, 1, 2) / 255.0).astype(np.float32)


def _check_labels(labels: np.ndarray, cfg: ClassifierConfig) -> None:
    if len(labels) and (labels.min() < 0 or labels.max() >= cfg.num_classes):
        raise LabelOutOfRangeError(f"labels must lie in [0, {cfg.num_classes})")


@dataclass
class ClassifierCheckpoint:
    config: ClassifierConfig
    state: dict

    def build(self) -> Classifier:
        c = Classifier(self.config)
        c.load_state_dict(self.state)
        return c

    def save(self, path) -> None:
        meta = {
            "meta.input_channels": self.config.input_channels,
            "meta.num_classes": self.config.num_classes,
            "meta.conv_filters": np.array(self.config.conv_filters),
            "meta.dropout_ps": np.array(self.config.dropout_ps),
            "meta.leaky_slope": self.config.leaky_slope,
            "meta.image_size": self.config.image_size,
        }
        save_checkpoint(path, {**{k: np.asarray(v, np.float32) for k, v in meta.items()}, **self.state})

    @classmethod
    def load(cls, path) -> "ClassifierCheckpoint":
        t = load_checkpoint(path)
        try:
            cfg = ClassifierConfig(
                input_channels=int(t.pop("meta.input_channels")),
                num_classes=int(t.pop("meta.num_classes")),
                conv_filters=tuple(int(v) for v in t.pop("meta.conv_filters")),
                dropout_ps=tuple(float(v) for v in t.pop("meta.dropout_ps")),
                leaky_slope=float(t.pop("meta.leaky_slope")),
                image_size=int(t.pop("meta.image_size")),
            )
        except KeyError as exc:
            raise CheckpointFormatError(f"checkpoint lacks classifier field {exc}") from None
        return cls(cfg, dict(t))


@dataclass
class ClassifierEpoch:
    epoch: int
    loss: float
    train_accuracy: float
    wall_seconds: float

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self))


def train_classifier(images, labels, cfg: ClassifierConfig, epochs: int, seed: int = 0):
    """Cross-entropy training with Adam; returns ``(checkpoint, epoch records)``."""
    x_all = _as_array(images)
    y_all = np.asarray(labels, dtype=np.int64)
    if len(x_all) == 0:
        raise EmptyDatasetError("no training images")
    if len(x_all) != len(y_all):
        raise ShapeMismatchError("images and labels differ in length")
    _check_labels(y_all, cfg)
    model = build_classifier(cfg, derive_seed(seed, "classifier"))
    opt = Adam(model.parameters(), lr=cfg.lr)
    aug_rng = make_rng(seed, "augment")
    records = []
    for epoch in range(1, epochs + 1):
        start = time.perf_counter()
        model.train()
        order = make_rng(seed, "classifier-shuffle", epoch).permutation(len(x_all))
        loss_sum = 0.0
        correct = 0
        for b in range(0, len(order), cfg.batch_size):
            idx = order[b : b + cfg.batch_size]
            batch = np.stack([augment(x_all[i], cfg, aug_rng) for i in idx])
            logits = model(Tensor(_to_input(batch)))
            loss = F.softmax_cross_entropy(logits, y_all[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            loss_sum += loss.item() * len(idx)
            correct += int((logits.data.argmax(axis=1) == y_all[idx]).sum())
        rec = ClassifierEpoch(epoch, loss_sum / len(order), correct / len(order), time.perf_counter() - start)
        records.append(rec)
        log.info("classifier epoch %d loss=%.4f acc=%.3f", epoch, rec.loss, rec.train_accuracy)
    state = {k: np.array(v, dtype=np.float32) for k, v in model.state_dict().items()}
    return ClassifierCheckpoint(cfg, state), records


def predict(checkpoint, images, batch_size: int = 128) -> np.ndarray:
    """Eval-mode logits (dropout off, running batch-norm statistics)."""
    model = checkpoint if isinstance(checkpoint, Classifier) else checkpoint.build()
    model.eval()
    x_all = _as_array(images)
    out = []
    with no_grad():
        for b in range(0, len(x_all), batch_size):
            out.append(model(Tensor(_to_input(x_all[b : b + batch_size]))).data)
    return np.concatenate(out) if out else np.zeros((0, model.cfg.num_classes), np.float32)


def evaluate(checkpoint, images, labels) -> float:
    """Fraction of argmax predictions equal to ``labels``."""
    y = np.asarray(labels, dtype=np.int64)
    if len(y) == 0:
        raise EmptyDatasetError("cannot evaluate on zero samples")
    cfg = checkpoint.cfg if isinstance(checkpoint, Classifier) else checkpoint.config
    _check_labels(y, cfg)
    pred = predict(checkpoint, images).argmax(axis=1)
    return float((pred == y).sum()) / len(y)


def confusion_matrix(labels, predictions, num_classes: int) -> np.ndarray:
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels, np.int64), np.asarray(predictions, np.int64)), 1)
    return cm
