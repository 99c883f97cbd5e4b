"""Run several methods on one fixture and write a joint summary.csv.

    python scripts/compare_methods.py --fixture noisy --methods fedavg,local_only,pfedlia_central
"""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass, field
from pathlib import Path

from pfedlia import fixtures, report
from pfedlia.clustering import adjusted_rand_index
from pfedlia.config import METHODS
from pfedlia.orchestrator import run_experiment


@dataclass
class CompareConfig:
    fixture: str = "pathological"
    methods: tuple[str, ...] = METHODS
    seeds: tuple[int, ...] = (0, 1, 2, 3)
    out: Path = field(default_factory=lambda: Path("results/compare"))


def run(cc: CompareConfig) -> list[report.SummaryRow]:
    cc.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for method in cc.methods:
        cfg = getattr(fixtures, cc.fixture)(method, seeds=cc.seeds)
        results = []
        for seed in cc.seeds:
            start = time.perf_counter()
            r = run_experiment(cfg, seed)
            results.append(r)
            ari = ""
            if r.assignment is not None:
                ari = f" ARI {adjusted_rand_index(r.assignment, [s.true_cluster for s in r.shards]):.3f}"
            print(f"{method:16s} seed {seed}: {r.final_accuracy:.4f}{ari} ({time.perf_counter() - start:.1f}s)")
        report.write_rounds_csv(cc.out / f"rounds_{method}.csv", results)
        rows.append(report.summarize(cfg, results))
    report.write_summary_csv(cc.out / "summary.csv", rows)
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--fixture", choices=["pathological", "noisy"], default="pathological")
    parser.add_argument("--methods", default=",".join(METHODS))
    parser.add_argument("--seeds", default="0,1,2,3")
    parser.add_argument("--out", default="results/compare")
    args = parser.parse_args()
    cc = CompareConfig(
        args.fixture,
        tuple(m for m in args.methods.split(",") if m),
        tuple(int(s) for s in args.seeds.split(",")),
        Path(args.out) / args.fixture,
    )
    for row in run(cc):
        print(f"{row.method:16s} {row.final_mean_accuracy:.4f} +/- {row.std_accuracy:.4f}")


if __name__ == "__main__":
    main()
