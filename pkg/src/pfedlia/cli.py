"""Command line entry point.

    pfedlia run --config cfg.json [--seed 0,1] [--out results/]
    pfedlia bench-influence --config bench.json [--out results/]
    pfedlia dump-clusters --config cfg.json [--seed 0] [--out results/]

Exit status: 0 on success, 1 on a configuration error, 2 when the run
itself fails. A failed command leaves no partial outputs behind.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import shutil
import sys
import tempfile
from pathlib import Path

from .config import ExperimentConfig, load_bench_config, load_config
from .data import ConfigurationError, IdxError
from .orchestrator import ExperimentResult, Simulation, run_experiment
from .influence import speedup_benchmark
from . import report

log = logging.getLogger("pfedlia")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigurationError(f"--seed expects comma-separated integers, got {text!r}") from exc
    if not seeds:
        raise ConfigurationError("--seed is empty")
    return seeds


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None):
        cfg = dataclasses.replace(cfg, seeds=_parse_seeds(args.seed))
    return cfg


class _Staging:
    """Write into a scratch directory and move files to ``out`` only when
    the command succeeds."""

    def __init__(self, out: Path):
        self.out = out
        self.out.mkdir(parents=True, exist_ok=True)
        self.dir = Path(tempfile.mkdtemp(prefix=".partial-", dir=self.out))

    def commit(self) -> list[Path]:
        moved = []
        for src in sorted(self.dir.rglob("*")):
            if src.is_file():
                dst = self.out / src.relative_to(self.dir)
                dst.parent.mkdir(parents=True, exist_ok=True)
                shutil.move(str(src), dst)
                moved.append(dst)
        shutil.rmtree(self.dir, ignore_errors=True)
        return moved

    def discard(self):
        shutil.rmtree(self.dir, ignore_errors=True)


def run_and_write(cfg: ExperimentConfig, out: Path) -> list[ExperimentResult]:
    stage = _Staging(out)
    try:
        results = []
        artifacts = ["rounds.csv", "summary.csv", "manifest.json"]
        for seed in cfg.seeds:
            log.info("%s: seed %d", cfg.method, seed)
            result = run_experiment(cfg, seed)
            results.append(result)
            for p in report.write_seed_artifacts(stage.dir / f"seed_{seed}", result):
                artifacts.append(str(p.relative_to(stage.dir)))
        report.write_rounds_csv(stage.dir / "rounds.csv", results)
        report.write_summary_csv(stage.dir / "summary.csv", [report.summarize(cfg, results)])
        report.RunManifest.create(cfg, artifacts).write(stage.dir / "manifest.json")
    except BaseException:
        stage.discard()
        raise
    stage.commit()
    return results


def cmd_run(args) -> int:
    cfg = _resolve(args)
    results = run_and_write(cfg, Path(args.out))
    summary = report.summarize(cfg, results)
    print(
        f"{cfg.method}: final mean accuracy {summary.final_mean_accuracy:.4f} "
        f"+/- {summary.std_accuracy:.4f} over {summary.n_seeds} seed(s) -> {args.out}"
    )
    return EXIT_OK


def cmd_dump_clusters(args) -> int:
    cfg = _resolve(args)
    if cfg.method not in ("pfedlia_central", "pfedlia_p2p"):
        raise ConfigurationError("dump-clusters needs a pfedlia_central or pfedlia_p2p config")
    stage = _Staging(Path(args.out))
    try:
        for seed in cfg.seeds:
            sim = Simulation(cfg, seed)
            theta0 = sim.run_warmup([])
            result = ExperimentResult(seed, [], sim.shards)
            sim.clustering_phase(theta0, result)
            report.write_seed_artifacts(stage.dir / f"seed_{seed}", result)
    except BaseException:
        stage.discard()
        raise
    for path in stage.commit():
        print(path)
    return EXIT_OK


def cmd_bench(args) -> int:
    scenario = load_bench_config(args.config)
    stage = _Staging(Path(args.out))
    try:
        rows = speedup_benchmark(scenario)
        report.write_speedup_csv(stage.dir / "speedup.csv", rows)
    except BaseException:
        stage.discard()
        raise
    stage.commit()
    for r in rows:
        print(
            f"threshold {r.threshold:g}: lazy {r.lia_seconds * 1e3:.2f} ms, "
            f"exact {r.exact_seconds * 1e3:.1f} ms ({r.exact_epochs} epochs), ratio {r.ratio:.0f}x"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pfedlia", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment for every seed")
    p.add_argument("--config", required=True, help="experiment config or run manifest (JSON)")
    p.add_argument("--seed", help="comma-separated seeds, overrides the config")
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench-influence", help="time lazy vs exact influence")
    p.add_argument("--config", required=True, help="benchmark scenario (JSON)")
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("dump-clusters", help="warm-up and clustering only; write the scores")
    p.add_argument("--config", required=True)
    p.add_argument("--seed")
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_dump_clusters)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigurationError, IdxError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported through the exit status
        log.debug("run failed", exc_info=True)
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
