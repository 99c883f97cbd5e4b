"""Round-driven federated learning loop for all methods.

Clustered methods share the same skeleton: plain FedAvg warm-up rounds,
a one-shot grouping of the clients at the start of round
``warmup_rounds + 1``, then FedAvg restricted to each group. The
baselines are the degenerate cases: ``fedavg`` never groups,
``local_only`` puts every client in its own group from the start, and
``oracle`` groups by the ground-truth cluster.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import seeding
from .clustering import (
    ClusterAssignment,
    ReachabilityProfile,
    TwoMeansResult,
    cluster_centralized,
    cluster_peer,
)
from .config import (
    FEDAVG,
    LOCAL_ONLY,
    ORACLE,
    PFEDLIA_CENTRAL,
    PFEDLIA_P2P,
    ExperimentConfig,
    IdxSource,
)
from .data import (
    ClientShard,
    ConfigurationError,
    generate_synthetic,
    load_idx,
    partition,
    shift_features,
)
from .influence import InfluenceMatrix, build_influence_matrix
from .model import TrainConfig, TrainingDivergence, evaluate, init_params, local_train

log = logging.getLogger(__name__)

PHASE_GLOBAL = "global"
PHASE_LOCAL = "local"
PHASE_WARMUP = "warmup"
PHASE_CLUSTERING = "clustering"
PHASE_CLUSTERED = "clustered"


class ExperimentError(RuntimeError):
    def __init__(self, phase: str, round_idx: int, cause: Exception):
        super().__init__(f"{phase} phase, round {round_idx}: {cause}")
        self.phase = phase
        self.round = round_idx
        self.__cause__ = cause


@dataclass
class RoundLog:
    round: int
    phase: str
    per_client_accuracy: list[float]
    per_cluster_sizes: list[int]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.per_client_accuracy))

    @property
    def std_accuracy(self) -> float:
        return float(np.std(self.per_client_accuracy))


@dataclass
class ExperimentResult:
    seed: int
    logs: list[RoundLog]
    shards: list[ClientShard] = field(repr=False, default_factory=list)
    influence: InfluenceMatrix | None = None
    profile: ReachabilityProfile | None = None
    assignment: ClusterAssignment | None = None
    peer_results: list[TwoMeansResult] | None = None
    groups: list[list[int]] | None = None
    influence_builds: int = 0

    @property
    def final_accuracy(self) -> float:
        return self.logs[-1].mean_accuracy


def fedavg_aggregate(models, weights) -> np.ndarray:
    """Weighted mean, accumulated in input order.

    Callers pass models sorted by client index so that the floating-point
    sum is reproducible.
    """
    if len(models) == 0:
        raise ConfigurationError("no models to aggregate")
    if len(models) != len(weights):
        raise ConfigurationError("models and weights differ in length")
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise ConfigurationError("aggregation weights must be non-negative")
    total = w.sum()
    if total <= 0:
        raise ConfigurationError("aggregation weights are all zero")
    size = np.asarray(models[0]).size
    acc = np.zeros(size)
    for m, wi in zip(models, w):
        m = np.asarray(m, dtype=np.float64)
        if m.size != size:
            raise ConfigurationError("models differ in length")
        acc += (wi / total) * m
    return acc


def sample_clients(pool, fraction: float, round_seed: int) -> list[int]:
    """``ceil(fraction * |pool|)`` clients without replacement, sorted."""
    members = sorted(int(c) for c in pool)
    if not members:
        raise ConfigurationError("cannot sample from an empty pool")
    k = min(len(members), max(1, math.ceil(fraction * len(members) - 1e-9)))
    if k == len(members):
        return members
    picked = np.random.default_rng(round_seed).choice(len(members), size=k, replace=False)
    return sorted(members[i] for i in picked)


def load_dataset(cfg: ExperimentConfig, seed: int):
    if isinstance(cfg.data, IdxSource):
        data = load_idx(cfg.data.images, cfg.data.labels)
        if cfg.data.limit:
            data = data.subset(np.arange(min(cfg.data.limit, len(data))))
        return data
    return generate_synthetic(
        replace(cfg.data, seed=seeding.derive_seed(seed, seeding.DATA, cfg.data.seed))
    )


def prepare_shards(cfg: ExperimentConfig, seed: int) -> list[ClientShard]:
    data = load_dataset(cfg, seed)
    if data.dim != cfg.model.input_dim:
        raise ConfigurationError(
            f"data has {data.dim} features, model expects {cfg.model.input_dim}"
        )
    if int(data.y.max()) >= cfg.model.num_classes:
        raise ConfigurationError("data has more classes than the model")
    part_seed = seeding.derive_seed(seed, seeding.PARTITION, cfg.partition.seed)
    result = partition(data, cfg.partition_spec(part_seed))
    if cfg.partition.feature_shift > 0:
        result = shift_features(result, cfg.partition.feature_shift, part_seed)
    return result.shards


class Simulation:
    """State of one experiment run (one config, one seed)."""

    def __init__(self, cfg: ExperimentConfig, seed: int, shards: list[ClientShard] | None = None):
        self.cfg = cfg
        self.seed = seed
        self.shards = shards if shards is not None else prepare_shards(cfg, seed)
        if len(self.shards) != cfg.num_clients:
            raise ConfigurationError("number of shards does not match num_clients")
        self.theta_init = init_params(cfg.model, seeding.derive_seed(seed, seeding.INIT))

    # -- building blocks ------------------------------------------------

    def train_client(self, theta, client: int, round_idx: int, owner: int | None = None):
        keys = [self.seed, seeding.LOCAL_TRAIN, round_idx, client]
        if owner is not None:
            keys.append(owner + 1)
        cfg = TrainConfig(
            epochs=self.cfg.local_epochs_per_round,
            learning_rate=self.cfg.train.learning_rate,
            batch_size=self.cfg.train.batch_size,
            shuffle_seed=seeding.derive_seed(*keys),
        )
        return local_train(self.cfg.model, theta, self.shards[client].train, cfg)

    def group_round(self, theta, members: list[int], round_idx: int, owner: int | None = None):
        """One FedAvg round restricted to ``members``. The sampling stream is
        keyed by the group's smallest member, so the all-clients group draws
        exactly what plain FedAvg draws."""
        key = members[0] if owner is None else owner
        participants = sample_clients(
            members,
            self.cfg.participation_fraction,
            seeding.derive_seed(self.seed, seeding.SAMPLE, round_idx, key),
        )
        updates = [self.train_client(theta, c, round_idx, owner) for c in participants]
        weights = [len(self.shards[c].train) for c in participants]
        return fedavg_aggregate(updates, weights)

    def accuracy(self, theta, client: int) -> float:
        return evaluate(self.cfg.model, theta, self.shards[client].validation)[1]

    def log_round(self, round_idx, phase, deployed, groups) -> RoundLog:
        acc = [self.accuracy(deployed[c], c) for c in range(len(self.shards))]
        return RoundLog(round_idx, phase, acc, [len(g) for g in groups])

    # -- phases ---------------------------------------------------------

    def run_warmup(self, logs: list[RoundLog], phase: str = PHASE_WARMUP, rounds=None):
        theta = self.theta_init
        everyone = [list(range(len(self.shards)))]
        n = self.cfg.warmup_rounds if rounds is None else rounds
        for r in range(1, n + 1):
            try:
                theta = self.group_round(theta, everyone[0], r)
            except TrainingDivergence as exc:
                raise ExperimentError(phase, r, exc) from exc
            logs.append(self.log_round(r, phase, [theta] * len(self.shards), everyone))
        return theta

    def clustering_phase(self, theta0, result: ExperimentResult):
        """Group the clients once. Returns (groups, beneficial sets or None)."""
        cfg = self.cfg
        n = len(self.shards)
        if cfg.method == ORACLE:
            assignment = ClusterAssignment.canonical([s.true_cluster for s in self.shards])
            result.assignment = assignment
            return assignment.groups(), None

        lia = replace(cfg.lia, seed=seeding.derive_seed(self.seed, seeding.LIA, cfg.lia.seed))
        matrix = build_influence_matrix(cfg.model, theta0, self.shards, lia)
        result.influence = matrix
        result.influence_builds += 1

        if cfg.method == PFEDLIA_CENTRAL:
            profile, assignment = cluster_centralized(matrix, cfg.optics)
            result.profile, result.assignment = profile, assignment
            noise = [i for i, v in enumerate(assignment.labels) if v < 0]
            if noise:
                log.info("seed %d: %d unclustered clients train alone", self.seed, len(noise))
            return assignment.groups(), None

        peers = [
            cluster_peer(matrix.row(i), i, seeding.derive_seed(self.seed, seeding.KMEANS, i))
            for i in range(n)
        ]
        result.peer_results = peers
        sets = [frozenset(p.beneficial) for p in peers]
        consistent = all(sets[j] == sets[i] for i in range(n) for j in sets[i])
        if consistent:
            groups = sorted({tuple(sorted(s)) for s in sets}, key=lambda g: g[0])
            groups = [list(g) for g in groups]
            labels = [0] * n
            for k, g in enumerate(groups):
                for c in g:
                    labels[c] = k
            result.assignment = ClusterAssignment(labels)
            return groups, None
        return None, [sorted(s) for s in sets]

    def run(self) -> ExperimentResult:
        cfg = self.cfg
        n = len(self.shards)
        logs: list[RoundLog] = []
        result = ExperimentResult(self.seed, logs, self.shards)

        if cfg.method == FEDAVG:
            self.run_warmup(logs, PHASE_GLOBAL, cfg.total_rounds)
            return result

        if cfg.method == LOCAL_ONLY:
            groups = [[c] for c in range(n)]
            models = {c: self.theta_init for c in range(n)}
            self._clustered_rounds(models, groups, 1, logs, PHASE_LOCAL)
            result.groups = groups
            return result

        theta0 = self.run_warmup(logs)
        first = cfg.warmup_rounds + 1
        try:
            groups, personal_sets = self.clustering_phase(theta0, result)
        except (TrainingDivergence, ValueError) as exc:
            raise ExperimentError(PHASE_CLUSTERING, first, exc) from exc

        if groups is not None:
            result.groups = groups
            models = {g[0]: theta0 for g in groups}
            self._clustered_rounds(models, groups, first, logs)
        else:
            result.groups = None
            self._personal_rounds(theta0, personal_sets, first, logs)
        return result

    def _clustered_rounds(self, models, groups, first, logs, phase=None):
        owner_of = {c: g[0] for g in groups for c in g}
        for r in range(first, self.cfg.total_rounds + 1):
            this_phase = phase or (PHASE_CLUSTERING if r == first else PHASE_CLUSTERED)
            try:
                for g in groups:
                    models[g[0]] = self.group_round(models[g[0]], g, r)
            except TrainingDivergence as exc:
                raise ExperimentError(this_phase, r, exc) from exc
            deployed = [models[owner_of[c]] for c in range(len(self.shards))]
            logs.append(self.log_round(r, this_phase, deployed, groups))

    def _personal_rounds(self, theta0, sets, first, logs):
        """Every client keeps its own model and each round averages updates
        that sampled members of its beneficial set compute from it."""
        n = len(self.shards)
        personal = [theta0] * n
        sizes = [len(s) for s in sets]
        for r in range(first, self.cfg.total_rounds + 1):
            phase = PHASE_CLUSTERING if r == first else PHASE_CLUSTERED
            try:
                personal = [
                    self.group_round(personal[i], sets[i], r, owner=i) for i in range(n)
                ]
            except TrainingDivergence as exc:
                raise ExperimentError(phase, r, exc) from exc
            acc = [self.accuracy(personal[c], c) for c in range(n)]
            logs.append(RoundLog(r, phase, acc, sizes))


def run_experiment(cfg: ExperimentConfig, seed: int, shards=None) -> ExperimentResult:
    return Simulation(cfg, seed, shards).run()
