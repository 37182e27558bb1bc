"""End-to-end benchmark: spiking vs raw vs naturalized classification accuracy.

Flow for a prepared paired dataset:

1. train a classifier on the spiking sources, evaluate on test sources;
2. train a classifier on the raw targets, evaluate on test targets;
3. train the cGAN on train pairs (val pairs drive its validation L1);
4. naturalize the test sources and evaluate them with the raw classifier.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from evnat.bench.manifest import RunManifest, to_jsonable, tree_fingerprint
from evnat.bench.prepare import PrepareOptions, poisson_source
from evnat.bench.report import plot_accuracies, plot_training, render_grid, write_summary_csv
from evnat.classifier import ClassifierConfig, confusion_matrix, predict, train_classifier
from evnat.errors import EmptyDatasetError, MissingInputError, ReportWriteFailureError, UnsupportedCombinationError
from evnat.ingest.paired import class_names, load_paired_dataset
from evnat.ingest.pnm import write_pnm
from evnat.ingest.types import PairedSample
from evnat.nn.checkpoint import atomic_write
from evnat.pix2pix import (
    DiscriminatorConfig, GanTrainConfig, GeneratorConfig, generate_batch, train as train_gan, write_training_log,
)
from evnat.rng import derive_seed

log = logging.getLogger(__name__)


@dataclass
class BenchmarkConfig:
    profile: str = "desk"
    seed: int = 0
    classifier: ClassifierConfig = field(default_factory=lambda: ClassifierConfig(conv_filters=(16, 32, 64)))
    classifier_epochs: int = 15
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    gan: GanTrainConfig = field(default_factory=GanTrainConfig)
    grid_columns: int = 8
    # evaluate this prepared dataset's test sources with the spiking classifier
    cross_eval_data: Optional[str] = None
    # poisson datasets only: draw fresh spike trains for the cGAN every epoch
    resample_spikes_per_epoch: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkConfig":
        d = dict(d)
        base = cls()
        sub = {
            "classifier": ClassifierConfig,
            "generator": GeneratorConfig,
            "discriminator": DiscriminatorConfig,
            "gan": GanTrainConfig,
        }
        kwargs = {}
        for name, typ in sub.items():
            if name in d:
                kwargs[name] = dataclasses.replace(getattr(base, name), **d.pop(name))
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown benchmark config keys {sorted(unknown)}")
        return cls(**d, **kwargs)

    @classmethod
    def load(cls, path) -> "BenchmarkConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return to_jsonable(self)


PROFILES = {
    "desk": {},
    "full": {
        "profile": "full",
        "classifier": {"conv_filters": [32, 64, 128], "num_classes": 10},
        "classifier_epochs": 100,
        "generator": {"base_filters": 64, "depth": 5, "max_filters": 512},
        "discriminator": {"base_filters": 64, "num_layers": 3, "max_filters": 512},
        "gan": {"epochs": 200, "batch_size": 16},
    },
}


@dataclass
class BenchmarkReport:
    accuracy_raw: float
    accuracy_spiking: float
    accuracy_naturalized: float
    delta_naturalized_minus_spiking_pp: float
    delta_raw_minus_naturalized_pp: float
    class_names: list
    test_counts: list
    confusion_raw: list
    confusion_spiking: list
    confusion_naturalized: list
    gan_initial_val_l1: float
    gan_final_val_l1: Optional[float]
    accuracy_cross: Optional[float] = None
    confusion_cross: Optional[list] = None

    @classmethod
    def from_accuracies(cls, raw: float, spiking: float, naturalized: float, **kw) -> "BenchmarkReport":
        return cls(
            accuracy_raw=raw,
            accuracy_spiking=spiking,
            accuracy_naturalized=naturalized,
            delta_naturalized_minus_spiking_pp=100.0 * (naturalized - spiking),
            delta_raw_minus_naturalized_pp=100.0 * (raw - naturalized),
            **kw,
        )

    def check(self) -> None:
        """Raise ValueError unless accuracies, deltas and confusion matrices agree."""
        for name in ("accuracy_raw", "accuracy_spiking", "accuracy_naturalized"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        expected = {
            "delta_naturalized_minus_spiking_pp": 100 * (self.accuracy_naturalized - self.accuracy_spiking),
            "delta_raw_minus_naturalized_pp": 100 * (self.accuracy_raw - self.accuracy_naturalized),
        }
        for name, value in expected.items():
            if abs(getattr(self, name) - value) >= 1e-12:
                raise ValueError(f"{name} disagrees with the accuracies")
        for cm in (self.confusion_raw, self.confusion_spiking, self.confusion_naturalized):
            if [sum(row) for row in cm] != self.test_counts:
                raise ValueError("confusion matrix rows do not sum to the per-class test counts")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"


def _arrays(samples, which: str):
    imgs = np.stack([getattr(s, which).to_uint8().pixels for s in samples])
    return imgs, np.array([s.label for s in samples], dtype=np.int64)


def _resampler(prepared_root: Path, train, seed: int):
    """Per-epoch spike re-draw for a poisson-mode dataset, reusing its recorded options."""
    prep = RunManifest.read(prepared_root)
    if prep.config.get("mode") != "poisson":
        raise UnsupportedCombinationError("resample_spikes_per_epoch needs a poisson-mode dataset")
    opts = PrepareOptions.from_dict(prep.config.get("options", {}))

    def pairs_for(epoch: int):
        return [
            PairedSample(poisson_source(s.target, opts, derive_seed(seed, "resample", epoch, s.sample_id)),
                         s.target, s.label, s.sample_id, s.class_name)
            for s in train
        ]
    return pairs_for


def run_benchmark(prepared_root, config: BenchmarkConfig, report_path, run_dir=None) -> BenchmarkReport:
    """Run the full comparison and write the report plus supporting artifacts.

    Artifacts land in ``run_dir`` (default: the report's directory):
    checkpoints, JSON-lines logs, naturalized test images, a 3-row grid,
    accuracy and training figures, a CSV summary and ``manifest.json``.
    """
    prepared_root = Path(prepared_root)
    report_path = Path(report_path)
    run_dir = Path(run_dir) if run_dir is not None else report_path.parent
    run_dir.mkdir(parents=True, exist_ok=True)
    if not prepared_root.is_dir():
        raise MissingInputError(f"prepared dataset {prepared_root} does not exist")

    train = load_paired_dataset(prepared_root, "train")
    val = load_paired_dataset(prepared_root, "val")
    test = load_paired_dataset(prepared_root, "test")
    if not train or not test:
        raise EmptyDatasetError(f"{prepared_root} needs non-empty train and test splits")
    names = class_names(prepared_root)
    k = len(names)
    size = train[0].source.height
    seed = config.seed

    manifest = RunManifest(
        kind="benchmark",
        config=config.to_dict(),
        seeds={
            "seed": seed,
            "classifier_spiking": derive_seed(seed, "clf-spiking"),
            "classifier_raw": derive_seed(seed, "clf-raw"),
            "gan": derive_seed(seed, "gan"),
        },
        datasets={prepared_root.as_posix(): tree_fingerprint(prepared_root)},
    )

    base_clf = dataclasses.replace(config.classifier, num_classes=k, image_size=size)
    src_train, y_train = _arrays(train, "source")
    tgt_train, _ = _arrays(train, "target")
    src_test, y_test = _arrays(test, "source")
    tgt_test, _ = _arrays(test, "target")

    log.info("training spiking classifier on %d sources", len(train))
    clf_spk, log_spk = train_classifier(src_train, y_train, base_clf.with_channels(1), config.classifier_epochs,
                                        manifest.seeds["classifier_spiking"])
    log.info("training raw classifier on %d targets", len(train))
    clf_raw, log_raw = train_classifier(tgt_train, y_train, base_clf.with_channels(3), config.classifier_epochs,
                                        manifest.seeds["classifier_raw"])

    gcfg = dataclasses.replace(config.generator, image_size=size, input_channels=1, output_channels=3)
    dcfg = dataclasses.replace(config.discriminator, image_size=size, input_channels=4)
    tcfg = dataclasses.replace(config.gan, seed=manifest.seeds["gan"])
    log.info("training cGAN for %d epochs", tcfg.epochs)
    epoch_pairs = _resampler(prepared_root, train, tcfg.seed) if config.resample_spikes_per_epoch else None
    gan = train_gan(train, gcfg, dcfg, tcfg, val_pairs=val or None, epoch_pairs=epoch_pairs)
    naturalized = generate_batch(gan.checkpoint, [s.source for s in test])
    nat_test = np.stack([im.pixels for im in naturalized])

    pred_spk = predict(clf_spk, src_test).argmax(1)
    pred_raw = predict(clf_raw, tgt_test).argmax(1)
    pred_nat = predict(clf_raw, nat_test).argmax(1)
    acc = lambda p: float((p == y_test).sum()) / len(y_test)
    extra = {}
    if config.cross_eval_data:
        cross = load_paired_dataset(config.cross_eval_data, "test")
        if not cross:
            raise EmptyDatasetError(f"cross-evaluation set {config.cross_eval_data} has no test split")
        cx, cy = _arrays(cross, "source")
        pred_cross = predict(clf_spk, cx).argmax(1)
        extra["accuracy_cross"] = float((pred_cross == cy).sum()) / len(cy)
        extra["confusion_cross"] = confusion_matrix(cy, pred_cross, k).tolist()

    report = BenchmarkReport.from_accuracies(
        acc(pred_raw), acc(pred_spk), acc(pred_nat),
        class_names=names,
        test_counts=np.bincount(y_test, minlength=k).tolist(),
        confusion_raw=confusion_matrix(y_test, pred_raw, k).tolist(),
        confusion_spiking=confusion_matrix(y_test, pred_spk, k).tolist(),
        confusion_naturalized=confusion_matrix(y_test, pred_nat, k).tolist(),
        gan_initial_val_l1=gan.initial_val_l1,
        gan_final_val_l1=gan.log[-1].val_l1 if gan.log else None,
        **extra,
    )
    report.check()

    _write_artifacts(run_dir, manifest, report, report_path, gan, clf_spk, clf_raw, log_spk, log_raw,
                     test, naturalized, config.grid_columns)
    return report


def _write_artifacts(run_dir, manifest, report, report_path, gan, clf_spk, clf_raw, log_spk, log_raw,
                     test, naturalized, grid_columns):
    written = []
    try:
        atomic_write(report_path, report.to_json().encode())
    except OSError as exc:
        raise ReportWriteFailureError(f"cannot write report {report_path}: {exc}") from exc
    written.append(report_path)

    ckpt = run_dir / "checkpoints"
    gan.checkpoint.save(ckpt / "generator.evn")
    clf_spk.save(ckpt / "classifier_spiking.evn")
    clf_raw.save(ckpt / "classifier_raw.evn")
    written += [ckpt / "generator.evn", ckpt / "classifier_spiking.evn", ckpt / "classifier_raw.evn"]

    logs = run_dir / "logs"
    write_training_log(logs / "gan.jsonl", gan.log)
    write_training_log(logs / "classifier_spiking.jsonl", log_spk)
    write_training_log(logs / "classifier_raw.jsonl", log_raw)
    written += [logs / "gan.jsonl", logs / "classifier_spiking.jsonl", logs / "classifier_raw.jsonl"]

    for sample, img in zip(test, naturalized):
        path = run_dir / "naturalized" / sample.class_name / f"{sample.sample_id}.ppm"
        atomic_write(path, write_pnm(img))
        written.append(path)

    n = min(grid_columns, len(test))
    # spread the grid over classes: take test samples round-robin by label
    by_label = {}
    for i, s in enumerate(test):
        by_label.setdefault(s.label, []).append(i)
    picks = []
    while len(picks) < n:
        for lab in sorted(by_label):
            if by_label[lab] and len(picks) < n:
                picks.append(by_label[lab].pop(0))
    grid = run_dir / "grid.ppm"
    render_grid([test[i].source for i in picks], [naturalized[i] for i in picks], [test[i].target for i in picks], grid)
    written.append(grid)

    rep = dataclasses.asdict(report)
    plot_accuracies(rep, run_dir / "accuracy.png")
    plot_training(gan.log, {"spiking": log_spk, "raw": log_raw}, run_dir / "training.png")
    write_summary_csv(rep, run_dir / "summary.csv")
    written += [run_dir / "accuracy.png", run_dir / "training.png", run_dir / "summary.csv"]

    for path in written:
        manifest.add_artifact(run_dir, path)
    manifest.write(run_dir)
