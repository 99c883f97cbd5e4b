import csv
import json
import subprocess
import sys

import pytest

from pfedlia.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from pfedlia.config import LocalTraining, dump_config

from conftest import small


@pytest.fixture
def config_file(tmp_path):
    def make(method="pfedlia_central", **kw):
        path = tmp_path / f"{method}.json"
        dump_config(small(method, **kw), path)
        return path

    return make


def test_run_writes_all_outputs(config_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(config_file()), "--seed", "0,1", "--out", str(out)]) == EXIT_OK
    names = sorted(p.relative_to(out).as_posix() for p in out.rglob("*") if p.is_file())
    assert names == [
        "manifest.json", "rounds.csv", "seed_0/clusters.csv", "seed_0/influence_matrix.csv",
        "seed_1/clusters.csv", "seed_1/influence_matrix.csv", "summary.csv",
    ]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"] == [0, 1]
    assert sorted(manifest["artifacts"]) == [n for n in names]
    with open(out / "summary.csv", newline="") as fh:
        summary = list(csv.DictReader(fh))
    assert summary[0]["n_seeds"] == "2" and summary[0]["method"] == "pfedlia_central"
    with open(out / "rounds.csv", newline="") as fh:
        assert len(list(csv.reader(fh))) == 1 + 2 * 12
    assert "final mean accuracy" in capsys.readouterr().out


def test_baselines_write_no_influence(config_file, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", str(config_file("fedavg")), "--out", str(out)]) == EXIT_OK
    assert not (out / "seed_0").exists()


def test_rerun_from_manifest_is_byte_identical(config_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(config_file("pfedlia_p2p")), "--out", str(a)]) == EXIT_OK
    assert main(["run", "--config", str(a / "manifest.json"), "--out", str(b)]) == EXIT_OK
    assert (a / "rounds.csv").read_bytes() == (b / "rounds.csv").read_bytes()
    assert (a / "seed_0" / "influence_matrix.csv").read_bytes() == (b / "seed_0" / "influence_matrix.csv").read_bytes()


def test_config_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"method": "fedavg", "model": {"kind": "softmax-regression"}, "typo": 1}))
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "typo" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert main(["run", "--config", str(bad), "--seed", "a,b"]) == EXIT_CONFIG


def test_runtime_failure_exits_2_and_leaves_nothing(config_file, tmp_path):
    out = tmp_path / "out"
    path = config_file("fedavg", train=LocalTraining(1e308, 16))
    assert main(["run", "--config", str(path), "--out", str(out)]) == EXIT_RUNTIME
    assert list(out.iterdir()) == []


def test_dump_clusters(config_file, tmp_path, capsys):
    out = tmp_path / "d"
    assert main(["dump-clusters", "--config", str(config_file("pfedlia_p2p")), "--out", str(out)]) == EXIT_OK
    assert (out / "seed_0" / "frontiers.csv").exists()
    assert (out / "seed_0" / "influence_matrix.csv").exists()
    assert main(["dump-clusters", "--config", str(config_file("fedavg")), "--out", str(out)]) == EXIT_CONFIG


def test_bench_influence(tmp_path):
    cfg = tmp_path / "b.json"
    cfg.write_text(json.dumps({
        "model": {"kind": "mlp", "input_dim": 4, "num_classes": 3, "hidden_dim": 4},
        "data": {"num_classes": 3, "input_dim": 4, "examples_per_class": 40},
        "base_size": 80, "batch_size": 5, "validation_size": 20,
        "thresholds": [1e-2, 1e-3], "repeats": 2,
        "exact": {"max_epochs": 300},
    }))
    out = tmp_path / "o"
    assert main(["bench-influence", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    lines = (out / "speedup.csv").read_text().splitlines()
    assert lines[0] == "threshold,lia_seconds,exact_seconds,ratio"
    assert len(lines) == 3


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "pfedlia", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for sub in ("run", "bench-influence", "dump-clusters"):
        assert sub in proc.stdout
