"""Conditional GAN for paired source-to-target translation.

Generator: U-Net with stride-2 4x4 convolutions down, stride-2 4x4
transposed convolutions up, skip concatenation from the mirrored encoder
level, dropout in the first decoder levels, tanh output.

Discriminator: PatchGAN. Stride-2 conv + batch-norm + leaky-ReLU blocks over
the channel-concatenated (source, image) pair, then a 3x3 one-channel conv
and a sigmoid, giving a grid of per-patch "real" probabilities.

Objective per batch::

    d_loss = bce(D(x, y), 1) + bce(D(x, G(x)), 0)
    g_loss = bce(D(x, G(x)), 1) + lambda_l1 * |G(x) - y|_1

The generator uses the non-saturating form (maximise log D(x, G(x)))
rather than minimising log(1 - D(x, G(x))).
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from evnat.errors import (
    CheckpointFormatError,
    EmptyDatasetError,
    GeometryMismatchError,
    IndivisibleSpatialSizeError,
    ShapeMismatchError,
    SizeMismatchError,
    SpatialCollapseError,
)
from evnat.ingest.types import ImageBuffer, PairedSample, StorageKind
from evnat.nn import functional as F
from evnat.nn.checkpoint import load_checkpoint, save_checkpoint
from evnat.nn.modules import (
    BatchNorm2d, Conv2d, ConvTranspose2d, Dropout, LeakyReLU, Module, ReLU, Sequential, Sigmoid,
)
from evnat.nn.optim import Adam
from evnat.nn.tensor import Tensor, concat, no_grad
from evnat.rng import derive_seed, make_rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeneratorConfig:
    input_channels: int = 1
    output_channels: int = 3
    base_filters: int = 16
    depth: int = 3
    dropout_p: float = 0.5
    max_filters: int = 128
    image_size: int = 32

    def validate(self) -> None:
        if self.depth < 2:
            raise ValueError("generator depth must be at least 2")
        if self.image_size % (2**self.depth):
            raise IndivisibleSpatialSizeError(
                f"image side {self.image_size} is not divisible by 2**{self.depth}"
            )


@dataclass(frozen=True)
class DiscriminatorConfig:
    input_channels: int = 4
    base_filters: int = 16
    num_layers: int = 3
    max_filters: int = 128
    image_size: int = 32

    def validate(self) -> None:
        if self.num_layers < 1:
            raise ValueError("discriminator needs at least one layer")
        if self.image_size < 2**self.num_layers:
            raise SpatialCollapseError(
                f"{self.num_layers} stride-2 layers collapse a {self.image_size}px input below 1x1"
            )

    @property
    def patch_grid(self) -> int:
        size = self.image_size
        for _ in range(self.num_layers):
            size = (size + 2 - 4) // 2 + 1
        return size


@dataclass(frozen=True)
class GanTrainConfig:
    epochs: int = 30
    batch_size: int = 16
    lambda_l1: float = 100.0
    seed: int = 0
    checkpoint_interval: int = 0
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999

    def validate(self) -> None:
        if self.lambda_l1 < 0:
            raise ValueError("lambda_l1 must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


# -- networks ----------------------------------------------------------------


def _init_gan_weights(module: Module, rng: np.random.Generator) -> None:
    # N(0, 0.02) for convolutions, N(1, 0.02) for batch-norm scale
    for m in module.modules():
        if isinstance(m, (Conv2d, ConvTranspose2d)):
            m.weight.data = rng.normal(0.0, 0.02, m.weight.shape).astype(m.weight.dtype)
        elif isinstance(m, BatchNorm2d):
            m.gamma.data = rng.normal(1.0, 0.02, m.gamma.shape).astype(m.gamma.dtype)


class UNetGenerator(Module):
    def __init__(self, cfg: GeneratorConfig, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        widths = [min(cfg.base_filters * 2**i, cfg.max_filters) for i in range(cfg.depth)]
        self.widths = widths
        self.down = []
        cin = cfg.input_channels
        for i, wdt in enumerate(widths):
            layers = [Conv2d(cin, wdt, 4, 2, 1, bias=i == 0)]
            if i > 0:
                layers.append(BatchNorm2d(wdt))
            layers.append(LeakyReLU(0.2))
            self.down.append(Sequential(*layers))
            cin = wdt
        self.up = []
        n_dropout = min(3, cfg.depth - 1)
        for j, level in enumerate(range(cfg.depth - 1, 0, -1)):
            cin = widths[level] if j == 0 else 2 * widths[level]
            layers = [ConvTranspose2d(cin, widths[level - 1], 4, 2, 1, bias=False), BatchNorm2d(widths[level - 1])]
            if j < n_dropout and cfg.dropout_p > 0:
                layers.append(Dropout(cfg.dropout_p, seed=derive_seed(seed, "gen-dropout", j)))
            layers.append(ReLU())
            self.up.append(Sequential(*layers))
        self.final = ConvTranspose2d(2 * widths[0], cfg.output_channels, 4, 2, 1)
        _init_gan_weights(self, make_rng(seed, "generator-init"))

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.cfg.input_channels or x.shape[2:] != (self.cfg.image_size,) * 2:
            raise GeometryMismatchError(
                f"generator built for {self.cfg.input_channels}x{self.cfg.image_size}^2, got {x.shape[1:]}"
            )
        skips = []
        h = x
        for block in self.down:
            h = block(h)
            skips.append(h)
        for j, block in enumerate(self.up):
            h = block(h)
            h = concat([h, skips[-2 - j]], axis=1)
        return F.tanh(self.final(h))

    def set_dropout(self, active: bool) -> None:
        for m in self.modules():
            if isinstance(m, Dropout):
                m.training = active


class PatchDiscriminator(Module):
    def __init__(self, cfg: DiscriminatorConfig, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        blocks = []
        cin = cfg.input_channels
        for i in range(cfg.num_layers):
            wdt = min(cfg.base_filters * 2**i, cfg.max_filters)
            blocks += [Conv2d(cin, wdt, 4, 2, 1, bias=False), BatchNorm2d(wdt), LeakyReLU(0.2)]
            cin = wdt
        blocks += [Conv2d(cin, 1, 3, 1, 1), Sigmoid()]
        self.net = Sequential(*blocks)
        _init_gan_weights(self, make_rng(seed, "discriminator-init"))

    def forward(self, x: Tensor, y: Tensor) -> Tensor:
        if x.shape[0] != y.shape[0] or x.shape[2:] != y.shape[2:]:
            raise ShapeMismatchError(f"source {x.shape} and image {y.shape} do not pair up")
        if x.shape[1] + y.shape[1] != self.cfg.input_channels:
            raise ShapeMismatchError(
                f"discriminator expects {self.cfg.input_channels} channels, got {x.shape[1] + y.shape[1]}"
            )
        return self.net(concat([x, y], axis=1))


def build_generator(cfg: GeneratorConfig, seed: int = 0) -> UNetGenerator:
    return UNetGenerator(cfg, seed)


def build_discriminator(cfg: DiscriminatorConfig, seed: int = 0) -> PatchDiscriminator:
    return PatchDiscriminator(cfg, seed)


# -- losses ------------------------------------------------------------------


def d_loss(D, x: Tensor, y: Tensor, y_fake: Tensor) -> Tensor:
    """Discriminator loss; ``y_fake`` is detached so no gradient reaches the generator."""
    if y.shape != y_fake.shape:
        raise ShapeMismatchError(f"real {y.shape} vs fake {y_fake.shape}")
    real = D(x, y)
    fake = D(x, y_fake.detach())
    return F.bce(real, 1.0) + F.bce(fake, 0.0)


def g_loss(D, x: Tensor, y: Tensor, y_fake: Tensor, lambda_l1: float) -> Tensor:
    if y.shape != y_fake.shape:
        raise ShapeMismatchError(f"real {y.shape} vs fake {y_fake.shape}")
    adv = F.bce(D(x, y_fake), 1.0)
    if lambda_l1 == 0:
        return adv
    return adv + F.l1(y_fake, y) * lambda_l1


# -- data conversion -----------------------------------------------------------


def to_signed(images: np.ndarray) -> np.ndarray:
    """uint8 (N, H, W, C) -> float32 (N, C, H, W) in [-1, 1]."""
    return (np.asarray(images, dtype=np.float32).transpose(0, 3, 1, 2) / 127.5 - 1.0).astype(np.float32)


def from_signed(arr: np.ndarray) -> np.ndarray:
    """float (N, C, H, W) in [-1, 1] -> uint8 (N, H, W, C)."""
    return np.clip(np.round((np.asarray(arr, dtype=np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8).transpose(0, 2, 3, 1)


def stack_pairs(pairs: Sequence[PairedSample]) -> tuple[np.ndarray, np.ndarray]:
    src = np.stack([p.source.to_uint8().pixels for p in pairs])
    tgt = np.stack([p.target.to_uint8().pixels for p in pairs])
    return to_signed(src), to_signed(tgt)


# -- checkpoints -----------------------------------------------------------------


@dataclass
class GeneratorCheckpoint:
    config: GeneratorConfig
    state: dict

    def build(self) -> UNetGenerator:
        g = UNetGenerator(self.config)
        g.load_state_dict(self.state)
        return g

    def to_tensors(self) -> dict:
        meta = {f"meta.{k}": np.float32(v) for k, v in dataclasses.asdict(self.config).items()}
        return {**meta, **self.state}

    def save(self, path) -> None:
        save_checkpoint(path, self.to_tensors())

    @classmethod
    def load(cls, path) -> "GeneratorCheckpoint":
        tensors = load_checkpoint(path)
        fields = {f.name: f.type for f in dataclasses.fields(GeneratorConfig)}
        kwargs = {}
        for name in fields:
            key = f"meta.{name}"
            if key not in tensors:
                raise CheckpointFormatError(f"checkpoint lacks generator config field {name!r}")
            val = float(tensors.pop(key))
            kwargs[name] = val if name == "dropout_p" else int(round(val))
        return cls(GeneratorConfig(**kwargs), dict(tensors))


@dataclass
class EpochRecord:
    epoch: int
    d_loss: float
    g_loss: float
    val_l1: float
    wall_seconds: float

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self))


@dataclass
class GanTrainResult:
    checkpoint: GeneratorCheckpoint
    log: list
    initial_val_l1: float
    discriminator_state: dict

    def numeric_log(self) -> list:
        """Log records without wall-clock time, for determinism comparisons."""
        return [(r.epoch, r.d_loss, r.g_loss, r.val_l1) for r in self.log]


# -- training ---------------------------------------------------------------------


def mean_l1_01(generated: np.ndarray, target: np.ndarray) -> float:
    """Mean absolute error in [0, 1] pixel units between two [-1, 1] arrays."""
    return float(np.abs(np.asarray(generated, np.float64) - np.asarray(target, np.float64)).mean() / 2.0)


def _predict(G: UNetGenerator, src: np.ndarray, batch_size: int = 64, dropout: bool = False) -> np.ndarray:
    was_training = G.training
    G.eval()
    G.set_dropout(dropout)
    out = []
    with no_grad():
        for i in range(0, len(src), batch_size):
            out.append(G(Tensor(src[i : i + batch_size])).data)
    G.train(was_training)
    return np.concatenate(out) if out else np.zeros((0,), np.float32)


def _check_geometry(pairs, gcfg: GeneratorConfig):
    sizes = {(p.source.height, p.source.width) for p in pairs} | {(p.target.height, p.target.width) for p in pairs}
    if len(sizes) != 1:
        raise SizeMismatchError(f"inconsistent image sizes {sorted(sizes)}")
    (h, w), = sizes
    if h != w or h != gcfg.image_size:
        raise SizeMismatchError(f"images are {h}x{w}, generator expects {gcfg.image_size}px squares")


def discriminator_step(D, opt_d: Adam, x: Tensor, y: Tensor, fake: Tensor) -> float:
    """One Adam step on D; ``fake`` is detached inside ``d_loss`` so G is untouched."""
    opt_d.zero_grad()
    loss = d_loss(D, x, y, fake)
    loss.backward()
    opt_d.step()
    return loss.item()


def generator_step(D, opt_g: Adam, x: Tensor, y: Tensor, fake: Tensor, lambda_l1: float) -> float:
    """One Adam step on G through the (unchanged) discriminator."""
    opt_g.zero_grad()
    D.zero_grad()
    loss = g_loss(D, x, y, fake, lambda_l1)
    loss.backward()
    opt_g.step()
    D.zero_grad()
    return loss.item()


def train(pairs: Sequence[PairedSample], gcfg: GeneratorConfig, dcfg: DiscriminatorConfig, tcfg: GanTrainConfig,
          val_pairs: Optional[Sequence[PairedSample]] = None, checkpoint_dir=None,
          epoch_pairs: Optional[Callable[[int], Sequence[PairedSample]]] = None) -> GanTrainResult:
    """Alternate one discriminator and one generator Adam step per batch.

    ``val_pairs`` (default: the training pairs) feeds the per-epoch
    ``val_l1``. ``epoch_pairs``, when given, supplies freshly sampled
    training pairs for each epoch (e.g. re-drawn spike trains).
    """
    if not pairs:
        raise EmptyDatasetError("no training pairs")
    gcfg.validate()
    dcfg.validate()
    tcfg.validate()
    _check_geometry(pairs, gcfg)
    val_pairs = list(val_pairs) if val_pairs else list(pairs)
    _check_geometry(val_pairs, gcfg)

    G = build_generator(gcfg, derive_seed(tcfg.seed, "G"))
    D = build_discriminator(dcfg, derive_seed(tcfg.seed, "D"))
    opt_g = Adam(G.parameters(), tcfg.lr, (tcfg.beta1, tcfg.beta2))
    opt_d = Adam(D.parameters(), tcfg.lr, (tcfg.beta1, tcfg.beta2))
    val_src, val_tgt = stack_pairs(val_pairs)
    initial = mean_l1_01(_predict(G, val_src), val_tgt)
    records = []
    src, tgt = stack_pairs(pairs)

    for epoch in range(1, tcfg.epochs + 1):
        start = time.perf_counter()
        if epoch_pairs is not None:
            src, tgt = stack_pairs(epoch_pairs(epoch))
        order = make_rng(tcfg.seed, "shuffle", epoch).permutation(len(src))
        d_sum = g_sum = 0.0
        batches = 0
        G.train()
        D.train()
        for b in range(0, len(order), tcfg.batch_size):
            idx = order[b : b + tcfg.batch_size]
            x, y = Tensor(src[idx]), Tensor(tgt[idx])
            fake = G(x)
            d_sum += discriminator_step(D, opt_d, x, y, fake)
            g_sum += generator_step(D, opt_g, x, y, fake, tcfg.lambda_l1)
            batches += 1
        val = mean_l1_01(_predict(G, val_src), val_tgt)
        rec = EpochRecord(epoch, d_sum / batches, g_sum / batches, val, time.perf_counter() - start)
        records.append(rec)
        log.info("epoch %d d_loss=%.4f g_loss=%.4f val_l1=%.4f", epoch, rec.d_loss, rec.g_loss, rec.val_l1)
        if checkpoint_dir is not None and tcfg.checkpoint_interval and epoch % tcfg.checkpoint_interval == 0:
            GeneratorCheckpoint(gcfg, _copy_state(G)).save(Path(checkpoint_dir) / f"generator_epoch{epoch:04d}.evn")

    return GanTrainResult(GeneratorCheckpoint(gcfg, _copy_state(G)), records, initial, _copy_state(D))


def _copy_state(module: Module) -> dict:
    return {k: np.array(v, dtype=np.float32) for k, v in module.state_dict().items()}


def write_training_log(path, records) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


# -- inference -----------------------------------------------------------------------


def generate_batch(checkpoint, sources: Sequence[ImageBuffer], dropout: bool = False) -> list[ImageBuffer]:
    G = checkpoint if isinstance(checkpoint, UNetGenerator) else checkpoint.build()
    cfg = G.cfg
    for s in sources:
        if (s.height, s.width, s.channels) != (cfg.image_size, cfg.image_size, cfg.input_channels):
            raise GeometryMismatchError(
                f"source {s.height}x{s.width}x{s.channels} does not match "
                f"{cfg.image_size}x{cfg.image_size}x{cfg.input_channels}"
            )
    if not sources:
        return []
    src = to_signed(np.stack([s.to_uint8().pixels for s in sources]))
    out = from_signed(_predict(G, src, dropout=dropout))
    return [ImageBuffer(img, StorageKind.UINT8) for img in out]


def generate(checkpoint, source: ImageBuffer, dropout: bool = False) -> ImageBuffer:
    """Map one source through the generator in eval mode, returning an 8-bit RGB image.

    With ``dropout=True`` the decoder dropout stays active, giving stochastic
    outputs; the default is deterministic.
    """
    return generate_batch(checkpoint, [source], dropout)[0]
