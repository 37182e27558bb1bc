"""Command-line entry point: ``evnat <subcommand> ...``.

On failure the process exits non-zero and prints one JSON object to stderr,
``{"error": <code>, "message": <text>}``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from evnat.errors import EmptyDatasetError, EvnatError, MissingInputError

log = logging.getLogger("evnat")


def _load_config(path, profile: str = "desk"):
    from evnat.bench.benchmark import PROFILES, BenchmarkConfig

    if path is None:
        return BenchmarkConfig.from_dict(PROFILES[profile])
    return BenchmarkConfig.load(path)


def cmd_prepare(args) -> int:
    from evnat.bench.prepare import PrepareOptions, prepare

    opts = {}
    if args.options:
        with open(args.options) as fh:
            opts = json.load(fh)
    if args.per_class is not None:
        opts["shapes_per_class"] = {"train": args.per_class, "val": max(1, args.per_class // 4),
                                    "test": max(1, args.per_class // 2)}
    if args.limit is not None:
        opts["cifar_limit"] = args.limit
    manifest = prepare(args.dataset, args.mode, args.out, seed=args.seed, input_dir=args.input,
                       edges_dir=args.edges, mapping=args.mapping, aedat_dir=args.aedat,
                       options=PrepareOptions.from_dict(opts))
    print(json.dumps({"out": str(args.out), "samples": manifest.config["samples"]}))
    return 0


def cmd_train_gan(args) -> int:
    from evnat.bench.manifest import RunManifest, tree_fingerprint
    from evnat.ingest.paired import load_paired_dataset
    from evnat.pix2pix import train, write_training_log

    cfg = _load_config(args.config, args.profile)
    pairs = load_paired_dataset(args.data, "train")
    if not pairs:
        raise EmptyDatasetError(f"{args.data} has no training pairs")
    val = load_paired_dataset(args.data, "val")
    size = pairs[0].source.height
    gcfg = dataclasses.replace(cfg.generator, image_size=size)
    dcfg = dataclasses.replace(cfg.discriminator, image_size=size)
    tcfg = dataclasses.replace(cfg.gan, seed=cfg.seed if args.seed is None else args.seed)
    out = Path(args.out)
    result = train(pairs, gcfg, dcfg, tcfg, val_pairs=val or None, checkpoint_dir=out / "checkpoints")
    manifest = RunManifest(
        kind="train-gan",
        config={"generator": gcfg, "discriminator": dcfg, "gan": tcfg},
        seeds={"seed": tcfg.seed},
        datasets={Path(args.data).as_posix(): tree_fingerprint(args.data)},
    )
    ckpt = out / "checkpoints" / "generator.evn"
    result.checkpoint.save(ckpt)
    write_training_log(out / "logs" / "gan.jsonl", result.log)
    for p in sorted((out / "checkpoints").glob("*.evn")):
        manifest.add_artifact(out, p)
    manifest.add_artifact(out, out / "logs" / "gan.jsonl")
    manifest.write(out)
    final = result.log[-1].val_l1 if result.log else result.initial_val_l1
    print(json.dumps({"checkpoint": str(ckpt), "initial_val_l1": result.initial_val_l1, "final_val_l1": final}))
    return 0


def cmd_train_classifier(args) -> int:
    from evnat.bench.manifest import RunManifest, tree_fingerprint
    from evnat.classifier import evaluate, train_classifier
    from evnat.ingest.paired import class_names, load_paired_dataset
    from evnat.pix2pix import write_training_log

    cfg = _load_config(args.config, args.profile)
    which = "source" if args.modality == "spiking" else "target"
    train = load_paired_dataset(args.data, "train")
    if not train:
        raise EmptyDatasetError(f"{args.data} has no training pairs")
    x = np.stack([getattr(s, which).pixels for s in train])
    y = np.array([s.label for s in train])
    ccfg = dataclasses.replace(cfg.classifier, num_classes=len(class_names(args.data)),
                               image_size=x.shape[1], input_channels=x.shape[3])
    seed = cfg.seed if args.seed is None else args.seed
    epochs = cfg.classifier_epochs if args.epochs is None else args.epochs
    ckpt, records = train_classifier(x, y, ccfg, epochs, seed)
    out = Path(args.out)
    path = out / "checkpoints" / f"classifier_{args.modality}.evn"
    ckpt.save(path)
    write_training_log(out / "logs" / f"classifier_{args.modality}.jsonl", records)
    result = {"checkpoint": str(path)}
    test = load_paired_dataset(args.data, "test")
    if test:
        xt = np.stack([getattr(s, which).pixels for s in test])
        result["test_accuracy"] = evaluate(ckpt, xt, [s.label for s in test])
    manifest = RunManifest(kind="train-classifier", config={"classifier": ccfg, "epochs": epochs,
                                                            "modality": args.modality},
                           seeds={"seed": seed},
                           datasets={Path(args.data).as_posix(): tree_fingerprint(args.data)})
    manifest.add_artifact(out, path)
    manifest.add_artifact(out, out / "logs" / f"classifier_{args.modality}.jsonl")
    manifest.write(out)
    print(json.dumps(result))
    return 0


def cmd_benchmark(args) -> int:
    from evnat.bench.benchmark import run_benchmark

    cfg = _load_config(args.config, args.profile)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    report = run_benchmark(args.data, cfg, args.report, run_dir=args.run_dir)
    print(json.dumps({
        "report": str(args.report),
        "accuracy_raw": report.accuracy_raw,
        "accuracy_naturalized": report.accuracy_naturalized,
        "accuracy_spiking": report.accuracy_spiking,
    }))
    return 0


def cmd_grid(args) -> int:
    from evnat.bench.manifest import RunManifest
    from evnat.bench.report import render_grid
    from evnat.ingest.paired import load_paired_dataset
    from evnat.ingest.pnm import read_pnm_file
    from evnat.pix2pix import GeneratorCheckpoint, generate_batch

    run = Path(args.run)
    manifest = RunManifest.read(run)
    if len(manifest.datasets) != 1:
        raise MissingInputError(f"{run} manifest does not name a single prepared dataset")
    data = next(iter(manifest.datasets))
    samples = load_paired_dataset(data, "test") or load_paired_dataset(data, "val")
    samples = samples[: args.columns]
    if not samples:
        raise EmptyDatasetError(f"{data} has no test or val pairs to show")
    saved = [run / "naturalized" / s.class_name / f"{s.sample_id}.ppm" for s in samples]
    if all(p.exists() for p in saved):
        generated = [read_pnm_file(p) for p in saved]
    else:
        ckpt = run / "checkpoints" / "generator.evn"
        if not ckpt.exists():
            raise MissingInputError(f"{run} holds neither naturalized images nor a generator checkpoint")
        generated = generate_batch(GeneratorCheckpoint.load(ckpt), [s.source for s in samples])
    render_grid([s.source for s in samples], generated, [s.target for s in samples], args.out)
    print(json.dumps({"grid": str(args.out), "columns": len(samples)}))
    return 0


def cmd_generate(args) -> int:
    from evnat.ingest.pnm import read_pnm_file, write_pnm_file
    from evnat.pix2pix import GeneratorCheckpoint, generate

    img = generate(GeneratorCheckpoint.load(args.checkpoint), read_pnm_file(args.source), dropout=args.stochastic)
    write_pnm_file(args.out, img)
    print(json.dumps({"out": str(args.out)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    from evnat.bench.prepare import DATASETS, MODES

    p = argparse.ArgumentParser(prog="evnat", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prepare", help="build a paired dataset")
    s.add_argument("--dataset", required=True, choices=DATASETS)
    s.add_argument("--mode", required=True, choices=MODES)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--input", type=Path, help="raw dataset directory (CIFAR-10 batches or Linnaeus 5 PPMs)")
    s.add_argument("--edges", type=Path, help="precomputed soft-edge maps (soft_edges mode)")
    s.add_argument("--aedat", type=Path, help="directory of CIFAR10-DVS .aedat recordings")
    s.add_argument("--mapping", type=Path, help="CSV of aedat_file,split,cifar_index")
    s.add_argument("--options", type=Path, help="JSON file of preparation options")
    s.add_argument("--per-class", type=int, help="shapes: training images per class")
    s.add_argument("--limit", type=int, help="cifar10: cap samples per split")
    s.set_defaults(func=cmd_prepare)

    for name, func, helptext in (
        ("train-gan", cmd_train_gan, "train the cGAN on a prepared dataset"),
        ("benchmark", cmd_benchmark, "run the full classification benchmark"),
        ("train-classifier", cmd_train_classifier, "train one benchmark classifier"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--data", required=True, type=Path)
        s.add_argument("--config", type=Path, help="JSON config (default: the chosen profile)")
        s.add_argument("--profile", choices=("desk", "full"), default="desk")
        s.add_argument("--seed", type=int)
        s.set_defaults(func=func)
        if name == "train-gan":
            s.add_argument("--out", required=True, type=Path)
        elif name == "benchmark":
            s.add_argument("--report", required=True, type=Path)
            s.add_argument("--run-dir", type=Path, help="artifact directory (default: next to the report)")
        else:
            s.add_argument("--modality", required=True, choices=("raw", "spiking"))
            s.add_argument("--out", required=True, type=Path)
            s.add_argument("--epochs", type=int)

    s = sub.add_parser("grid", help="render a source / naturalized / target montage")
    s.add_argument("--run", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--columns", type=int, default=8)
    s.set_defaults(func=cmd_grid)

    s = sub.add_parser("generate", help="naturalize a single PGM source")
    s.add_argument("--checkpoint", required=True, type=Path)
    s.add_argument("--source", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--stochastic", action="store_true", help="keep decoder dropout active")
    s.set_defaults(func=cmd_generate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except EvnatError as exc:
        err = {"error": exc.code, "message": str(exc)}
    except (OSError, ValueError, KeyError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(err), file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
