import json
import subprocess
import sys

import numpy as np
import pytest

from evnat.cli import main
from evnat.ingest import ImageBuffer, read_pnm_file
from evnat.ingest.pnm import write_pnm_file

FAST = {
    "classifier": {"conv_filters": [4, 8, 8], "batch_size": 8},
    "classifier_epochs": 1,
    "generator": {"base_filters": 4, "max_filters": 16},
    "discriminator": {"base_filters": 4},
    "gan": {"epochs": 1, "batch_size": 6, "checkpoint_interval": 1},
    "grid_columns": 3,
}


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "cfg.json").write_text(json.dumps(FAST))
    (root / "opts.json").write_text(json.dumps({"shapes_per_class": {"train": 4, "val": 2, "test": 2}}))
    assert main(["prepare", "--dataset", "shapes", "--mode", "canny", "--out", str(root / "data"),
                 "--options", str(root / "opts.json")]) == 0
    return root


def test_prepare_reports_count(workspace, capsys, tmp_path):
    code, out, _ = run(capsys, "prepare", "--dataset", "shapes", "--mode", "poisson", "--out", tmp_path / "p",
                       "--per-class", 4)
    assert code == 0
    assert json.loads(out)["samples"] == 3 * (4 + 1 + 2)


def test_train_gan(workspace, capsys):
    code, out, _ = run(capsys, "train-gan", "--data", workspace / "data", "--config", workspace / "cfg.json",
                       "--out", workspace / "gan")
    assert code == 0
    res = json.loads(out)
    assert (workspace / "gan" / "checkpoints" / "generator.evn").exists()
    assert (workspace / "gan" / "checkpoints" / "generator_epoch0001.evn").exists()
    assert (workspace / "gan" / "logs" / "gan.jsonl").read_text().count("\n") == 1
    assert res["final_val_l1"] > 0


@pytest.mark.parametrize("modality", ["raw", "spiking"])
def test_train_classifier(workspace, capsys, modality):
    code, out, _ = run(capsys, "train-classifier", "--data", workspace / "data", "--config",
                       workspace / "cfg.json", "--modality", modality, "--out", workspace / "clf")
    assert code == 0
    assert 0.0 <= json.loads(out)["test_accuracy"] <= 1.0
    assert (workspace / "clf" / "checkpoints" / f"classifier_{modality}.evn").exists()


def test_benchmark_grid_generate(workspace, capsys):
    code, out, _ = run(capsys, "benchmark", "--data", workspace / "data", "--config", workspace / "cfg.json",
                       "--report", workspace / "run" / "report.json")
    assert code == 0
    report = json.loads((workspace / "run" / "report.json").read_text())
    assert json.loads(out)["accuracy_raw"] == report["accuracy_raw"]

    code, out, _ = run(capsys, "grid", "--run", workspace / "run", "--out", workspace / "grid.ppm", "--columns", 2)
    assert code == 0
    assert read_pnm_file(workspace / "grid.ppm").shape == (104, 2 * 32 + 3 * 2, 3)

    src = workspace / "src.pgm"
    write_pnm_file(src, ImageBuffer(np.zeros((32, 32, 1), np.uint8)))
    code, _, _ = run(capsys, "generate", "--checkpoint", workspace / "run" / "checkpoints" / "generator.evn",
                     "--source", src, "--out", workspace / "gen.ppm")
    assert code == 0
    assert read_pnm_file(workspace / "gen.ppm").shape == (32, 32, 3)


def test_error_record(capsys, tmp_path):
    code, out, err = run(capsys, "prepare", "--dataset", "linnaeus5", "--mode", "canny", "--out", tmp_path)
    assert code != 0 and out == ""
    rec = json.loads(err.strip().splitlines()[-1])
    assert rec["error"] == "MissingInput" and rec["message"]


def test_geometry_error_record(workspace, capsys):
    bad = workspace / "bad.pgm"
    write_pnm_file(bad, ImageBuffer(np.zeros((16, 16, 1), np.uint8)))
    code, _, err = run(capsys, "generate", "--checkpoint", workspace / "gan" / "checkpoints" / "generator.evn",
                       "--source", bad, "--out", workspace / "x.ppm")
    assert code != 0 and json.loads(err.strip().splitlines()[-1])["error"] == "GeometryMismatch"


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "evnat", "prepare", "--dataset", "cifar10dvs",
                           "--mode", "canny", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 1
    assert json.loads(proc.stderr.strip().splitlines()[-1])["error"] == "UnsupportedCombination"
