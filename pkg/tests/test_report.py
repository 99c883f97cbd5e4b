import csv
import json
import math
import statistics

import numpy as np
import pytest

from pfedlia import report
from pfedlia.clustering import ClusterAssignment, ReachabilityProfile, TwoMeansResult
from pfedlia.influence import InfluenceMatrix, SpeedupRow
from pfedlia.orchestrator import ExperimentResult, RoundLog

from conftest import small


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def logs(finals):
    return [[RoundLog(1, "global", [0.0, 0.0], [2]), RoundLog(2, "global", [f, f], [2])] for f in finals]


def test_aggregate_uses_sample_std():
    row = report.aggregate_seeds(logs([0.5, 0.7, 0.9, 0.3]), "fedavg", "synthetic", "noisy")
    assert row.final_mean_accuracy == pytest.approx(0.6)
    assert row.std_accuracy == pytest.approx(statistics.stdev([0.5, 0.7, 0.9, 0.3]))
    assert row.n_seeds == 4


def test_aggregate_single_seed():
    row = report.aggregate_seeds(logs([0.8]))
    assert (row.final_mean_accuracy, row.std_accuracy, row.n_seeds) == (0.8, 0.0, 1)
    with pytest.raises(ValueError):
        report.aggregate_seeds([])


def test_rounds_csv_is_sorted_and_exact(tmp_path):
    a = ExperimentResult(2, [RoundLog(2, "clustered", [0.1, 0.2], [1, 1]), RoundLog(1, "warmup", [1 / 3, 0.2], [2])])
    b = ExperimentResult(0, [RoundLog(1, "global", [0.25, 0.75], [2])])
    report.write_rounds_csv(tmp_path / "r.csv", [a, b])
    out = rows(tmp_path / "r.csv")
    assert out[0] == report.ROUNDS_HEADER
    assert [(r[0], r[1]) for r in out[1:]] == [("0", "1"), ("2", "1"), ("2", "2")]
    assert float(out[2][6].split(";")[0]) == 1 / 3
    assert out[3][5] == "1;1"


def test_influence_csv_round_trip(tmp_path):
    m = InfluenceMatrix(np.random.default_rng(0).standard_normal((4, 4)) * 1e-7)
    report.write_influence_csv(tmp_path / "m.csv", m)
    assert rows(tmp_path / "m.csv")[0] == ["j0", "j1", "j2", "j3"]
    assert np.array_equal(report.read_influence_csv(tmp_path / "m.csv").scores, m.scores)


def test_clusters_and_frontiers(tmp_path):
    profile = ReachabilityProfile([2, 0, 1], [math.inf, 0.5, 0.25], [0.1, 0.1, 0.1])
    report.write_clusters_csv(tmp_path / "c.csv", ClusterAssignment([0, -1, 0]), profile)
    assert rows(tmp_path / "c.csv") == [
        report.CLUSTERS_HEADER, ["0", "2", "inf", "0"], ["1", "0", "0.5", "0"], ["2", "1", "0.25", "-1"],
    ]
    report.write_clusters_csv(tmp_path / "o.csv", ClusterAssignment([1, 0]))
    assert rows(tmp_path / "o.csv")[1:] == [["0", "0", "", "1"], ["1", "1", "", "0"]]
    report.write_frontiers_csv(tmp_path / "f.csv", [TwoMeansResult({0, 2}, 1.5, (3.0, 0.0))])
    assert rows(tmp_path / "f.csv")[1] == ["0", "1.5", "3.0", "0.0", "0", "0;2"]


def test_speedup_header(tmp_path):
    report.write_speedup_csv(tmp_path / "s.csv", [SpeedupRow(1e-3, 0.001, 0.5, 500.0, 10)])
    text = (tmp_path / "s.csv").read_text()
    assert text.splitlines()[0] == "threshold,lia_seconds,exact_seconds,ratio"


def test_manifest(tmp_path):
    cfg = small("fedavg", seeds=(1, 2))
    m = report.RunManifest.create(cfg, ["rounds.csv"])
    m.write(tmp_path / "manifest.json")
    data = json.loads((tmp_path / "manifest.json").read_text())
    assert data["seeds"] == [1, 2]
    assert data["run_id"].startswith(report.config_hash(cfg))
    assert data["artifacts"] == ["rounds.csv"]
    assert report.config_hash(cfg) != report.config_hash(small("fedavg", seeds=(1,)))
