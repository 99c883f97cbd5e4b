"""Experiment configuration: dataclasses plus a strict JSON loader.

Every section rejects keys it does not know, so a typo in a
hyperparameter fails loudly instead of silently running the default.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .clustering import OpticsParams
from .data import ConfigurationError, PartitionSpec, SyntheticSpec
from .influence import BenchScenario, ExactConfig, LiaConfig
from .model import ModelSpec

FEDAVG = "fedavg"
LOCAL_ONLY = "local_only"
ORACLE = "oracle"
PFEDLIA_CENTRAL = "pfedlia_central"
PFEDLIA_P2P = "pfedlia_p2p"
METHODS = (FEDAVG, LOCAL_ONLY, ORACLE, PFEDLIA_CENTRAL, PFEDLIA_P2P)
CLUSTERED_METHODS = (ORACLE, PFEDLIA_CENTRAL, PFEDLIA_P2P)


@dataclass(frozen=True)
class LocalTraining:
    """Optimizer settings for ordinary FL rounds; the epoch count comes
    from ``ExperimentConfig.local_epochs_per_round``."""

    learning_rate: float = 0.1
    batch_size: int = 16


@dataclass(frozen=True)
class IdxSource:
    images: str
    labels: str
    # keep only the first ``limit`` examples; 0 keeps all
    limit: int = 0


@dataclass(frozen=True)
class PartitionSettings:
    scheme: str = "pathological"
    num_clusters: int = 5
    noisy_extra_labels: int = 1
    noisy_probability: float = 0.5
    # norm of the per-cluster feature offset (0 disables)
    feature_shift: float = 0.0
    seed: int = 0

    def __post_init__(self):
        # the partition-level checks live on PartitionSpec
        PartitionSpec(self.scheme, self.num_clusters, 1, self.noisy_extra_labels,
                      self.noisy_probability, self.seed)
        if self.feature_shift < 0:
            raise ConfigurationError("feature_shift must be >= 0")


@dataclass(frozen=True)
class ExperimentConfig:
    method: str
    model: ModelSpec
    partition: PartitionSettings = PartitionSettings()
    data: SyntheticSpec | IdxSource = SyntheticSpec()
    num_clients: int = 100
    participation_fraction: float = 0.1
    total_rounds: int = 60
    warmup_rounds: int = 20
    local_epochs_per_round: int = 2
    train: LocalTraining = LocalTraining()
    lia: LiaConfig = LiaConfig()
    optics: OpticsParams = OpticsParams()
    seeds: tuple[int, ...] = (0, 1, 2, 3)
    name: str = ""

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.num_clients < 1:
            raise ConfigurationError("num_clients must be positive")
        if not 0.0 < self.participation_fraction <= 1.0:
            raise ConfigurationError("participation_fraction must lie in (0, 1]")
        if self.participation_fraction * self.num_clients < 1.0 - 1e-9:
            raise ConfigurationError("participation_fraction * num_clients must be >= 1")
        if self.total_rounds < 1:
            raise ConfigurationError("total_rounds must be positive")
        if self.warmup_rounds < 0:
            raise ConfigurationError("warmup_rounds must be >= 0")
        if self.method in CLUSTERED_METHODS and self.warmup_rounds >= self.total_rounds:
            raise ConfigurationError("warmup_rounds must be < total_rounds for clustered methods")
        if self.local_epochs_per_round < 1:
            raise ConfigurationError("local_epochs_per_round must be positive")
        if self.train.learning_rate < 0 or self.train.batch_size < 1:
            raise ConfigurationError("train.learning_rate >= 0 and train.batch_size >= 1 required")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if any(s < 0 for s in self.seeds):
            raise ConfigurationError("seeds must be non-negative")
        if isinstance(self.data, SyntheticSpec):
            if self.data.input_dim != self.model.input_dim:
                raise ConfigurationError("data.input_dim and model.input_dim differ")
            if self.data.num_classes > self.model.num_classes:
                raise ConfigurationError("model has fewer classes than the data")

    def partition_spec(self, seed: int) -> PartitionSpec:
        p = self.partition
        return PartitionSpec(
            p.scheme, p.num_clusters, self.num_clients,
            p.noisy_extra_labels, p.noisy_probability, seed,
        )

    @property
    def dataset_name(self) -> str:
        if isinstance(self.data, IdxSource):
            return "idx:" + Path(self.data.images).name
        return "synthetic"


def _build(cls, raw, where: str):
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{where}: expected an object, got {type(raw).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigurationError(f"{where}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**raw)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{where}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{where}: {exc}") from exc


def _float(v):
    # JSON has no infinity; accept the string spelling
    if isinstance(v, str) and v.lower() in ("inf", "infinity"):
        return math.inf
    return v


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    raw = dict(raw)
    sections = {"model", "partition", "data", "train", "lia", "optics"}
    top = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(raw) - top)
    if unknown:
        raise ConfigurationError(f"unknown key(s) {', '.join(unknown)}")
    for required in ("method", "model"):
        if required not in raw:
            raise ConfigurationError(f"missing required key {required!r}")

    kwargs = {k: v for k, v in raw.items() if k not in sections}
    kwargs["model"] = _build(ModelSpec, raw["model"], "model")
    if "partition" in raw:
        kwargs["partition"] = _build(PartitionSettings, raw["partition"], "partition")
    if "train" in raw:
        kwargs["train"] = _build(LocalTraining, raw["train"], "train")
    if "lia" in raw:
        kwargs["lia"] = _build(LiaConfig, raw["lia"], "lia")
    if "optics" in raw:
        optics = dict(raw["optics"]) if isinstance(raw["optics"], dict) else raw["optics"]
        if isinstance(optics, dict) and "max_eps" in optics:
            optics["max_eps"] = _float(optics["max_eps"])
        kwargs["optics"] = _build(OpticsParams, optics, "optics")
    if "data" in raw:
        data = raw["data"]
        if not isinstance(data, dict):
            raise ConfigurationError("data: expected an object")
        data = dict(data)
        kind = data.pop("kind", "synthetic")
        if kind == "synthetic":
            kwargs["data"] = _build(SyntheticSpec, data, "data")
        elif kind == "idx":
            kwargs["data"] = _build(IdxSource, data, "data")
        else:
            raise ConfigurationError(f"data: unknown kind {kind!r}")
    elif isinstance(kwargs["model"], ModelSpec):
        kwargs["data"] = dataclasses.replace(
            SyntheticSpec(),
            input_dim=kwargs["model"].input_dim,
            num_classes=kwargs["model"].num_classes,
        )
    if "seeds" in kwargs:
        if not isinstance(kwargs["seeds"], list) or not all(
            isinstance(s, int) for s in kwargs["seeds"]
        ):
            raise ConfigurationError("seeds must be a list of integers")
        kwargs["seeds"] = tuple(kwargs["seeds"])
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = dataclasses.asdict(cfg)
    out["seeds"] = list(cfg.seeds)
    if isinstance(cfg.data, IdxSource):
        out["data"] = {"kind": "idx", **out["data"]}
    else:
        out["data"] = {"kind": "synthetic", **out["data"]}
    if math.isinf(out["optics"]["max_eps"]):
        out["optics"]["max_eps"] = "inf"
    return out


def _parse_json(path) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc


def load_config(path) -> ExperimentConfig:
    """Load an experiment config, or the config snapshot inside a run manifest."""
    raw = _parse_json(path)
    if isinstance(raw, dict) and "config_snapshot" in raw:
        raw = raw["config_snapshot"]
    return config_from_dict(raw)


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")


def bench_from_dict(raw: dict) -> BenchScenario:
    if not isinstance(raw, dict):
        raise ConfigurationError("benchmark config must be a JSON object")
    raw = dict(raw)
    names = {f.name for f in dataclasses.fields(BenchScenario)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigurationError(f"unknown key(s) {', '.join(unknown)}")
    if "model" in raw:
        raw["model"] = _build(ModelSpec, raw["model"], "model")
    if "data" in raw:
        data = dict(raw["data"])
        data.pop("kind", None)
        raw["data"] = _build(SyntheticSpec, data, "data")
    if "lia" in raw:
        raw["lia"] = _build(LiaConfig, raw["lia"], "lia")
    if "exact" in raw:
        raw["exact"] = _build(ExactConfig, raw["exact"], "exact")
    if "thresholds" in raw:
        raw["thresholds"] = tuple(float(t) for t in raw["thresholds"])
    try:
        return BenchScenario(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from exc


def load_bench_config(path) -> BenchScenario:
    return bench_from_dict(_parse_json(path))


def bench_to_dict(scenario: BenchScenario) -> dict:
    out = dataclasses.asdict(scenario)
    out["thresholds"] = list(scenario.thresholds)
    return out
