"""Keyed random streams.

Every random decision in a run draws from a generator keyed by a tuple of
non-negative integers (run seed, purpose tag, round, client, ...). Keying
instead of threading one generator through the code keeps results
independent of call order, which is what makes two methods that share a
prefix (e.g. warm-up rounds) produce identical numbers.
"""

from __future__ import annotations

import numpy as np

# purpose tags
DATA = 1
PARTITION = 2
INIT = 3
SAMPLE = 4
LOCAL_TRAIN = 5
LIA = 6
KMEANS = 7
SPLIT = 8
NOISY = 9
EXACT = 10


def derive_seed(*keys: int) -> int:
    ss = np.random.SeedSequence([int(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng([int(k) for k in keys])
