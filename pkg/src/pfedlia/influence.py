"""Lazy influence scores between clients, and an exact retraining oracle.

The lazy score of client ``j`` as seen by client ``i`` is the drop in
``i``'s summed validation loss when the shared warm-up model is replaced
by ``j``'s partially trained copy. The exact oracle retrains from scratch
with and without a batch and is only used for tests and benchmarks.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .data import ClientShard, Examples, SyntheticSpec, generate_synthetic
from .model import (
    ModelSpec,
    TrainConfig,
    forward_loss,
    init_params,
    local_train,
)


@dataclass(frozen=True)
class LiaConfig:
    epochs_k: int = 20
    learning_rate: float = 0.05
    batch_size: int = 16
    train_batch_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs_k < 1:
            raise ValueError("epochs_k must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.train_batch_fraction <= 1.0:
            raise ValueError("train_batch_fraction must lie in (0, 1]")


@dataclass
class InfluenceMatrix:
    """``scores[i, j]``: influence of client j's partial model on client i."""

    scores: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 2 or self.scores.shape[0] != self.scores.shape[1]:
            raise ValueError("influence matrix must be square")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("influence matrix has non-finite entries")

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    def row(self, i: int) -> np.ndarray:
        return self.scores[i]


def influence_batch(shard: ClientShard, cfg: LiaConfig) -> Examples:
    n = len(shard.train)
    if n == 0:
        raise ValueError(f"client {shard.client_id} has no training data")
    keep = math.ceil(cfg.train_batch_fraction * n)
    if keep == n:
        return shard.train
    order = seeding.rng(cfg.seed, seeding.LIA, shard.client_id, 0).permutation(n)
    return shard.train.subset(order[:keep])


def partial_model(
    spec: ModelSpec, theta0: np.ndarray, client: ClientShard, cfg: LiaConfig
) -> np.ndarray:
    """Train ``theta0`` for ``cfg.epochs_k`` epochs on a batch of the client's data."""
    train_cfg = TrainConfig(
        epochs=cfg.epochs_k,
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        shuffle_seed=seeding.derive_seed(cfg.seed, seeding.LIA, client.client_id, 1),
    )
    return local_train(spec, theta0, influence_batch(client, cfg), train_cfg)


def lazy_influence(
    spec: ModelSpec, theta0: np.ndarray, theta_j: np.ndarray, validation: Examples
) -> float:
    # summed loss difference, written as n * (mean difference)
    n = len(validation)
    return n * (forward_loss(spec, theta0, validation) - forward_loss(spec, theta_j, validation))


def build_influence_matrix(
    spec: ModelSpec, theta0: np.ndarray, shards: list[ClientShard], cfg: LiaConfig
) -> InfluenceMatrix:
    """One partial model per client, then every client scores every partial
    model (its own included) on its validation set."""
    if len(shards) < 2:
        raise ValueError("need at least two clients")
    partials = [partial_model(spec, theta0, shard, cfg) for shard in shards]
    n = len(shards)
    scores = np.empty((n, n))
    for i, evaluator in enumerate(shards):
        base = forward_loss(spec, theta0, evaluator.validation)
        n_val = len(evaluator.validation)
        for j, theta_j in enumerate(partials):
            scores[i, j] = n_val * (base - forward_loss(spec, theta_j, evaluator.validation))
    return InfluenceMatrix(scores)


@dataclass(frozen=True)
class ExactConfig:
    """Training to a convergence threshold: stop once the epoch-to-epoch
    change of the training loss drops below ``threshold``."""

    threshold: float = 1e-4
    max_epochs: int = 5000
    learning_rate: float = 0.1
    batch_size: int = 1_000_000
    seed: int = 0


@dataclass
class ThresholdRun:
    theta: np.ndarray
    epochs: int
    capped: bool
    # threshold -> (epochs, train seconds) when it was first crossed
    crossings: dict[float, tuple[int, float]] = field(default_factory=dict)


def train_to_threshold(
    spec: ModelSpec,
    theta_init: np.ndarray,
    data: Examples,
    cfg: ExactConfig,
    thresholds: list[float] | None = None,
) -> ThresholdRun:
    """Train epoch by epoch until the loss change falls below every threshold
    in ``thresholds`` (default: ``cfg.threshold``) or the epoch cap hits.

    Always runs at least one epoch.
    """
    pending = sorted(set(thresholds or [cfg.threshold]), reverse=True)
    theta = np.array(theta_init, dtype=np.float64, copy=True)
    run = ThresholdRun(theta, 0, False)
    prev = forward_loss(spec, theta, data)
    elapsed = 0.0
    for epoch in range(1, cfg.max_epochs + 1):
        start = time.perf_counter()
        theta = local_train(
            spec,
            theta,
            data,
            TrainConfig(1, cfg.learning_rate, cfg.batch_size,
                        seeding.derive_seed(cfg.seed, seeding.EXACT, epoch)),
        )
        loss = forward_loss(spec, theta, data)
        elapsed += time.perf_counter() - start
        delta = abs(prev - loss)
        prev = loss
        while pending and delta < pending[0]:
            run.crossings[pending.pop(0)] = (epoch, elapsed)
        if not pending:
            break
    run.theta, run.epochs = theta, epoch
    if pending:
        run.capped = True
        for t in pending:
            run.crossings[t] = (epoch, elapsed)
    return run


@dataclass
class ExactInfluence:
    value: float
    epochs_base: int
    epochs_augmented: int
    # True when either model hit the epoch cap before the threshold
    capped: bool


def exact_influence(
    spec: ModelSpec,
    base_train: Examples,
    batch: Examples,
    validation: Examples,
    cfg: ExactConfig,
) -> ExactInfluence:
    """Validation-loss difference between a model trained on ``base_train``
    and one trained on ``base_train`` plus ``batch``, both from the same
    initialization and both trained to ``cfg.threshold``."""
    if len(base_train) == 0:
        raise ValueError("base training set is empty")
    theta_init = init_params(spec, seeding.derive_seed(cfg.seed, seeding.INIT))
    m0 = train_to_threshold(spec, theta_init, base_train, cfg)
    m1 = train_to_threshold(spec, theta_init, Examples.concat([base_train, batch]), cfg)
    n = len(validation)
    value = n * (forward_loss(spec, m0.theta, validation) - forward_loss(spec, m1.theta, validation))
    return ExactInfluence(value, m0.epochs, m1.epochs, m0.capped or m1.capped)


@dataclass(frozen=True)
class BenchScenario:
    model: ModelSpec = ModelSpec("mlp", 16, 10, 32)
    data: SyntheticSpec = SyntheticSpec(10, 16, 120, 4.0, 1.0, 0)
    base_size: int = 990
    batch_size: int = 10
    validation_size: int = 100
    thresholds: tuple[float, ...] = (1e-3, 1e-4, 1e-5)
    lia: LiaConfig = LiaConfig()
    exact: ExactConfig = ExactConfig()
    repeats: int = 5

    def __post_init__(self):
        if len(self.thresholds) < 2:
            raise ValueError("benchmark needs at least two thresholds")
        need = self.base_size + self.batch_size + self.validation_size
        have = self.data.num_classes * self.data.examples_per_class
        if have < need:
            raise ValueError(f"scenario needs {need} examples, data spec gives {have}")


@dataclass
class SpeedupRow:
    threshold: float
    lia_seconds: float
    exact_seconds: float
    ratio: float
    exact_epochs: int


def speedup_benchmark(scenario: BenchScenario) -> list[SpeedupRow]:
    """Wall-clock cost of one lazy score vs. one exact retraining per threshold.

    The lazy cost covers the partial training and the validation scoring;
    the exact cost covers training and evaluating the augmented model (the
    base model is trained beforehand and not timed). A single augmented run
    records when each threshold is first met, so tighter thresholds can never
    report less time.
    """
    pool = generate_synthetic(scenario.data)
    order = seeding.rng(scenario.data.seed, seeding.EXACT, 0).permutation(len(pool))
    b0, b1 = scenario.base_size, scenario.base_size + scenario.batch_size
    base = pool.subset(order[:b0])
    batch = pool.subset(order[b0:b1])
    validation = pool.subset(order[b1 : b1 + scenario.validation_size])

    spec = scenario.model
    theta_init = init_params(spec, seeding.derive_seed(scenario.exact.seed, seeding.INIT))
    tightest = min(scenario.thresholds)
    theta0 = train_to_threshold(spec, theta_init, base, scenario.exact, [tightest]).theta
    shard = ClientShard(0, batch, validation, 0)

    lia_times = []
    for _ in range(scenario.repeats):
        start = time.perf_counter()
        theta_j = partial_model(spec, theta0, shard, scenario.lia)
        lazy_influence(spec, theta0, theta_j, validation)
        lia_times.append(time.perf_counter() - start)
    lia_seconds = max(float(np.median(lia_times)), 1e-9)

    augmented = Examples.concat([base, batch])
    run = train_to_threshold(spec, theta_init, augmented, scenario.exact, list(scenario.thresholds))
    start = time.perf_counter()
    forward_loss(spec, run.theta, validation)
    eval_seconds = time.perf_counter() - start

    rows = []
    for t in sorted(scenario.thresholds, reverse=True):
        epochs, train_seconds = run.crossings[t]
        exact_seconds = train_seconds + eval_seconds
        rows.append(SpeedupRow(t, lia_seconds, exact_seconds, exact_seconds / lia_seconds, epochs))
    return rows
