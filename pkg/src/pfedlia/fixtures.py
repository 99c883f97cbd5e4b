"""Desk-scale experiment fixtures shared by the scripts and the tests.

pathological: 2-d softmax regression on ten tight Gaussian classes
(separation / sigma = 8). Two classes per cluster overlap the classes of
other clusters in a shared 2-d plane, so a single global model suffers
client drift while each cluster's pair is linearly separable.

noisy: 64-d classes with separation 3 sigma and only ~30 training
examples per client, so pooling within a cluster pays off over local
training. Noisy clients bridge clusters in influence space and the
reachability profile has no single dominant gap, so the eps-cut is set
explicitly instead of being chosen from the largest gap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import seeding
from .clustering import OpticsParams
from .config import ExperimentConfig, LocalTraining, PartitionSettings
from .data import ClientShard, Examples, SyntheticSpec, generate_synthetic
from .influence import (
    BenchScenario,
    ExactConfig,
    LiaConfig,
    exact_influence,
    lazy_influence,
    partial_model,
    train_to_threshold,
)
from .model import ModelSpec, init_params

NOISY_EXTRACTION_EPS = 1.5


def pathological(method: str, seeds=(0, 1, 2, 3), **overrides) -> ExperimentConfig:
    kw = dict(
        method=method,
        model=ModelSpec("softmax-regression", 2, 10),
        data=SyntheticSpec(10, 2, 1000, class_separation=1.0, noise_sigma=0.125),
        partition=PartitionSettings("pathological", num_clusters=5),
        num_clients=100,
        participation_fraction=0.1,
        total_rounds=60,
        warmup_rounds=20,
        local_epochs_per_round=5,
        train=LocalTraining(0.1, 16),
        seeds=tuple(seeds),
        name="pathological",
    )
    kw.update(overrides)
    return ExperimentConfig(**kw)


def noisy(method: str, seeds=(0, 1, 2, 3), **overrides) -> ExperimentConfig:
    kw = dict(
        method=method,
        model=ModelSpec("softmax-regression", 64, 10),
        data=SyntheticSpec(10, 64, 500, class_separation=3.0, noise_sigma=1.0),
        partition=PartitionSettings(
            "noisy", num_clusters=5, noisy_extra_labels=1, noisy_probability=0.5
        ),
        num_clients=100,
        participation_fraction=0.1,
        total_rounds=60,
        warmup_rounds=20,
        local_epochs_per_round=5,
        train=LocalTraining(0.1, 16),
        optics=OpticsParams(extraction_eps=NOISY_EXTRACTION_EPS),
        seeds=tuple(seeds),
        name="noisy",
    )
    kw.update(overrides)
    return ExperimentConfig(**kw)


def bench() -> BenchScenario:
    return BenchScenario()


SIGN_MODEL = ModelSpec("softmax-regression", 4, 2)
SIGN_EXACT = ExactConfig(threshold=1e-5, max_epochs=3000, learning_rate=0.5)


@dataclass
class SignCase:
    base: Examples
    batch: Examples
    validation: Examples
    harmful: bool


def sign_case(case: int, label_noise: float = 0.25) -> SignCase:
    """Two Gaussian classes. The base set carries label noise so a clean
    in-distribution batch still has something to fix; odd cases flip every
    label of the batch instead, which moves it out of the data distribution."""
    pool = generate_synthetic(SyntheticSpec(2, 4, 300, 3.0, 1.0, case))
    order = np.random.default_rng(case).permutation(len(pool))
    base = pool.subset(order[:60])
    batch = pool.subset(order[60:75])
    validation = pool.subset(order[100:400])
    rng = np.random.default_rng(1000 + case)
    y = base.y.copy()
    flip = rng.random(len(y)) < label_noise
    y[flip] = 1 - y[flip]
    harmful = case % 2 == 1
    if harmful:
        batch = Examples(batch.X, 1 - batch.y)
    return SignCase(Examples(base.X, y), batch, validation, harmful)


def sign_scores(case: SignCase, lia: LiaConfig = LiaConfig(), exact: ExactConfig = SIGN_EXACT):
    """(lazy, exact) influence of ``case.batch``. The lazy score starts from
    the model trained on the base set, which plays the warm-up model."""
    spec = SIGN_MODEL
    theta_init = init_params(spec, seeding.derive_seed(exact.seed, seeding.INIT))
    theta0 = train_to_threshold(spec, theta_init, case.base, exact).theta
    theta_j = partial_model(spec, theta0, ClientShard(0, case.batch, case.validation, 0), lia)
    lazy = lazy_influence(spec, theta0, theta_j, case.validation)
    return lazy, exact_influence(spec, case.base, case.batch, case.validation, exact).value
