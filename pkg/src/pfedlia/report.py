"""CSV and manifest outputs, and multi-seed aggregation.

Floats are written in their shortest round-trip form, so values survive a
write/read cycle exactly and two runs can be compared byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import statistics
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .clustering import ClusterAssignment, ReachabilityProfile, TwoMeansResult
from .config import ExperimentConfig, config_to_dict
from .influence import InfluenceMatrix, SpeedupRow
from .orchestrator import ExperimentResult, RoundLog

ROUNDS_HEADER = [
    "seed", "round", "phase", "mean_accuracy", "std_accuracy",
    "cluster_sizes", "client_accuracies",
]
SUMMARY_HEADER = [
    "method", "dataset", "partition", "final_mean_accuracy", "std_accuracy", "n_seeds",
]
CLUSTERS_HEADER = ["order_pos", "client_id", "reachability", "cluster"]
FRONTIERS_HEADER = [
    "evaluator", "frontier", "beneficial_centroid", "other_centroid",
    "degenerate", "beneficial_clients",
]
SPEEDUP_HEADER = ["threshold", "lia_seconds", "exact_seconds", "ratio"]


def fmt(x: float) -> str:
    return repr(float(x))


def _joined(values, conv=fmt) -> str:
    return ";".join(conv(v) for v in values)


def _write(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def round_row(seed: int, log: RoundLog) -> list[str]:
    return [
        str(seed), str(log.round), log.phase, fmt(log.mean_accuracy), fmt(log.std_accuracy),
        _joined(log.per_cluster_sizes, str), _joined(log.per_client_accuracy),
    ]


def write_rounds_csv(path, results: list[ExperimentResult]) -> Path:
    rows = [
        round_row(r.seed, log)
        for r in sorted(results, key=lambda r: r.seed)
        for log in sorted(r.logs, key=lambda l: l.round)
    ]
    return _write(path, ROUNDS_HEADER, rows)


@dataclass
class SummaryRow:
    method: str
    dataset: str
    partition: str
    final_mean_accuracy: float
    std_accuracy: float
    n_seeds: int

    def as_row(self) -> list[str]:
        return [
            self.method, self.dataset, self.partition,
            fmt(self.final_mean_accuracy), fmt(self.std_accuracy), str(self.n_seeds),
        ]


def aggregate_seeds(per_seed_logs, method="", dataset="", partition="") -> SummaryRow:
    """Mean and sample standard deviation of the final-round mean accuracy.

    With a single seed the deviation is reported as 0 and ``n_seeds`` = 1
    marks it as undefined.
    """
    finals = [logs[-1].mean_accuracy for logs in per_seed_logs]
    if not finals:
        raise ValueError("no seeds to aggregate")
    std = statistics.stdev(finals) if len(finals) > 1 else 0.0
    return SummaryRow(method, dataset, partition, statistics.fmean(finals), std, len(finals))


def summarize(cfg: ExperimentConfig, results: list[ExperimentResult]) -> SummaryRow:
    return aggregate_seeds(
        [r.logs for r in sorted(results, key=lambda r: r.seed)],
        cfg.method, cfg.dataset_name, cfg.partition.scheme,
    )


def write_summary_csv(path, rows: list[SummaryRow]) -> Path:
    return _write(path, SUMMARY_HEADER, [r.as_row() for r in rows])


def write_influence_csv(path, matrix: InfluenceMatrix) -> Path:
    header = [f"j{j}" for j in range(matrix.n)]
    return _write(path, header, [[fmt(v) for v in row] for row in matrix.scores])


def read_influence_csv(path) -> InfluenceMatrix:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return InfluenceMatrix(np.array([[float(v) for v in row] for row in rows[1:]]))


def write_clusters_csv(
    path, assignment: ClusterAssignment, profile: ReachabilityProfile | None = None
) -> Path:
    """One row per client in OPTICS order; without a profile (oracle,
    peer-to-peer) clients appear in index order with empty reachability."""
    if profile is None:
        rows = [[str(k), str(k), "", str(c)] for k, c in enumerate(assignment.labels)]
    else:
        rows = [
            [str(k), str(p), fmt(r), str(assignment.labels[p])]
            for k, (p, r) in enumerate(zip(profile.ordering, profile.reachability))
        ]
    return _write(path, CLUSTERS_HEADER, rows)


def write_frontiers_csv(path, peers: list[TwoMeansResult]) -> Path:
    rows = [
        [
            str(i), fmt(p.frontier), fmt(p.centroids[0]), fmt(p.centroids[1]),
            str(int(p.degenerate)), _joined(sorted(p.beneficial), str),
        ]
        for i, p in enumerate(peers)
    ]
    return _write(path, FRONTIERS_HEADER, rows)


def write_speedup_csv(path, rows: list[SpeedupRow]) -> Path:
    return _write(
        path, SPEEDUP_HEADER,
        [[fmt(r.threshold), fmt(r.lia_seconds), fmt(r.exact_seconds), fmt(r.ratio)] for r in rows],
    )


def write_seed_artifacts(directory, result: ExperimentResult) -> list[Path]:
    """Influence matrix, cluster dump and peer frontiers for one seed."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    if result.influence is not None:
        written.append(write_influence_csv(directory / "influence_matrix.csv", result.influence))
    if result.assignment is not None:
        written.append(
            write_clusters_csv(directory / "clusters.csv", result.assignment, result.profile)
        )
    if result.peer_results is not None:
        written.append(write_frontiers_csv(directory / "frontiers.csv", result.peer_results))
    return written


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class RunManifest:
    run_id: str
    config_snapshot: dict
    seeds: list[int]
    artifacts: list[str] = field(default_factory=list)

    @classmethod
    def create(cls, cfg: ExperimentConfig, artifacts=()) -> RunManifest:
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
        return cls(
            f"{config_hash(cfg)}-{stamp}", config_to_dict(cfg), list(cfg.seeds), list(artifacts)
        )

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(
            json.dumps(
                {
                    "run_id": self.run_id,
                    "config_snapshot": self.config_snapshot,
                    "seeds": self.seeds,
                    "artifacts": self.artifacts,
                },
                indent=2,
            )
            + "\n"
        )
        return path
