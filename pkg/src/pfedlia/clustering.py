"""Grouping clients from their influence scores.

Centralized path: each client's influence row becomes a point in R^N;
OPTICS orders the points and an eps-cut on the reachability profile
extracts clusters. Peer-to-peer path: each client splits its own row of
scalar scores into beneficial / not beneficial with 1-d 2-means.

Both paths only look at the positive part of a row. A negative score says
the peer's update hurts; how much it hurts depends mostly on how far the
warm-up model is from that peer's data, which says nothing about whether
the two clients belong together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import ConfigurationError
from .influence import InfluenceMatrix

NOISE = -1
ROW_EPS = 1e-12


@dataclass(frozen=True)
class OpticsParams:
    min_pts: int = 4
    max_eps: float = math.inf
    # fixed eps for the cut; None picks one from the largest reachability gap
    extraction_eps: float | None = None
    # a gap only counts as a cluster boundary when its upper edge is at
    # least this many times its lower edge
    min_gap_ratio: float = 2.0

    def __post_init__(self):
        if self.min_pts < 2:
            raise ConfigurationError("min_pts must be >= 2")
        if not self.max_eps > 0:
            raise ConfigurationError("max_eps must be positive")
        if self.extraction_eps is not None and not self.extraction_eps > 0:
            raise ConfigurationError("extraction_eps must be positive")
        if self.min_gap_ratio < 1:
            raise ConfigurationError("min_gap_ratio must be >= 1")


@dataclass
class ClusterAssignment:
    labels: list[int]

    def __post_init__(self):
        self.labels = [int(v) for v in self.labels]
        ids = sorted(set(self.labels) - {NOISE})
        if ids != list(range(len(ids))):
            raise ValueError(f"cluster ids must be contiguous from 0, got {ids}")

    @property
    def num_clusters(self) -> int:
        return len(set(self.labels) - {NOISE})

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def canonical(cls, labels) -> ClusterAssignment:
        """Relabel so clusters are numbered by their smallest member."""
        mapping: dict[int, int] = {}
        out = []
        for v in labels:
            v = int(v)
            if v == NOISE:
                out.append(NOISE)
                continue
            if v not in mapping:
                mapping[v] = len(mapping)
            out.append(mapping[v])
        return cls(out)

    def groups(self) -> list[list[int]]:
        """Member lists, noise points as singletons, ordered by smallest member."""
        by_id: dict[int, list[int]] = {}
        singles = []
        for i, v in enumerate(self.labels):
            if v == NOISE:
                singles.append([i])
            else:
                by_id.setdefault(v, []).append(i)
        return sorted(list(by_id.values()) + singles, key=lambda g: g[0])


@dataclass
class ReachabilityProfile:
    ordering: list[int]
    # reachability[k] belongs to ordering[k]; math.inf marks "undefined"
    reachability: list[float]
    core_distances: list[float] = field(default_factory=list)
    eps: float = math.inf


def row_features(matrix: InfluenceMatrix) -> np.ndarray:
    """Positive part of every row, divided by the row's largest entry."""
    helpful = np.maximum(matrix.scores, 0.0)
    scale = np.maximum(helpful.max(axis=1, keepdims=True), ROW_EPS)
    return helpful / scale


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    # direct differences: exact zeros on the diagonal and symmetric by construction
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


def optics_order(points, min_pts: int, max_eps: float = math.inf) -> ReachabilityProfile:
    """OPTICS ordering under the Euclidean metric.

    The core distance counts the point itself, so ``min_pts`` = 4 means the
    distance to the third nearest other point. Seed ties go to the lowest
    index, and a new walk starts at the lowest unprocessed index.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if n < min_pts:
        raise ConfigurationError(f"OPTICS needs at least {min_pts} points, got {n}")
    dist = pairwise_distances(pts)
    kth = np.sort(dist, axis=1)[:, min_pts - 1]
    core = np.where(kth <= max_eps, kth, np.inf)

    reach = np.full(n, np.inf)
    processed = np.zeros(n, dtype=bool)
    in_seeds = np.zeros(n, dtype=bool)
    ordering: list[int] = []
    reach_out: list[float] = []

    def expand(p: int):
        if not np.isfinite(core[p]):
            return
        cand = (~processed) & (dist[p] <= max_eps)
        new = np.maximum(core[p], dist[p])
        better = cand & (new < reach)
        reach[better] = new[better]
        in_seeds[better] = True

    for start in range(n):
        if processed[start]:
            continue
        processed[start] = True
        ordering.append(start)
        reach_out.append(math.inf)
        expand(start)
        while in_seeds.any():
            cand = np.flatnonzero(in_seeds)
            q = int(cand[np.argmin(reach[cand])])  # argmin keeps the lowest index on ties
            in_seeds[q] = False
            processed[q] = True
            ordering.append(q)
            reach_out.append(float(reach[q]))
            expand(q)
    return ReachabilityProfile(ordering, reach_out, [float(c) for c in core])


def auto_eps(reachability: list[float], min_gap_ratio: float = 2.0) -> float:
    """Midpoint of the widest gap between sorted finite reachability values.

    Returns ``inf`` (one cluster per connected walk) when there are fewer
    than two finite values or the widest gap is not a clear jump.
    """
    finite = np.sort([r for r in reachability if np.isfinite(r)])
    if finite.size < 2:
        return math.inf
    gaps = np.diff(finite)
    k = int(np.argmax(gaps))
    lo, hi = finite[k], finite[k + 1]
    if gaps[k] <= 0 or hi < min_gap_ratio * lo:
        return math.inf
    return float((lo + hi) / 2.0)


def extract_eps(profile: ReachabilityProfile, eps: float) -> ClusterAssignment:
    """DBSCAN-equivalent cut of an OPTICS profile at ``eps``."""
    n = len(profile.ordering)
    labels = [NOISE] * n
    current = NOISE
    next_id = 0
    for p, r in zip(profile.ordering, profile.reachability):
        # undefined reachability always starts a new walk, even for eps = inf
        if math.isinf(r) or r > eps:
            if profile.core_distances[p] <= eps:
                current = next_id
                next_id += 1
                labels[p] = current
            else:
                current = NOISE
        elif current != NOISE:
            labels[p] = current
    return ClusterAssignment.canonical(labels)


def optics(points, params: OpticsParams) -> tuple[ReachabilityProfile, ClusterAssignment]:
    profile = optics_order(points, params.min_pts, params.max_eps)
    eps = params.extraction_eps
    if eps is None:
        eps = auto_eps(profile.reachability, params.min_gap_ratio)
    profile.eps = eps
    return profile, extract_eps(profile, eps)


def cluster_centralized(
    matrix: InfluenceMatrix, params: OpticsParams
) -> tuple[ReachabilityProfile, ClusterAssignment]:
    return optics(row_features(matrix), params)


@dataclass
class TwoMeansResult:
    beneficial: set[int]
    frontier: float
    centroids: tuple[float, float]  # (beneficial, other)
    degenerate: bool = False
    iterations: int = 0


def kmeans_two(values, seed: int, max_iter: int = 100, tol: float = 1e-9) -> TwoMeansResult:
    """1-d k-means with k = 2 and k-means++ seeding.

    The beneficial cluster is the one with the larger centroid and points
    exactly on the frontier join it.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size < 2:
        raise ValueError("need at least two values")
    if np.all(x == x[0]):
        v = float(x[0])
        return TwoMeansResult(set(range(x.size)), v, (v, v), degenerate=True)

    rng = np.random.default_rng(seed)
    first = x[rng.integers(x.size)]
    d2 = (x - first) ** 2
    total = d2.sum()
    if not (total > 0 and np.isfinite(total)):
        # squared gaps underflowed or overflowed; weight distinct values evenly
        d2 = (x != first).astype(np.float64)
        total = d2.sum()
    second = x[rng.choice(x.size, p=d2 / total)]
    lo, hi = sorted((float(first), float(second)))

    it = 0
    for it in range(1, max_iter + 1):
        high = np.abs(x - hi) <= np.abs(x - lo)
        new_hi, new_lo = float(x[high].mean()), float(x[~high].mean())
        moved = max(abs(new_hi - hi), abs(new_lo - lo))
        hi, lo = new_hi, new_lo
        if moved < tol:
            break
    high = np.abs(x - hi) <= np.abs(x - lo)
    return TwoMeansResult(
        set(int(i) for i in np.flatnonzero(high)), (hi + lo) / 2.0, (hi, lo), iterations=it
    )


def cluster_peer(row, self_index: int, seed: int) -> TwoMeansResult:
    """Beneficial peers for one client from its own score row.

    2-means runs on the positive part of the row. The client always keeps
    itself; a row without harmful scores keeps everyone and a row without
    helpful scores keeps only the client.
    """
    row = np.asarray(row, dtype=np.float64)
    result = kmeans_two(np.maximum(row, 0.0), seed)
    if np.all(row > 0):
        result.beneficial = set(range(row.size))
    elif not np.any(row > 0):
        result.beneficial = set()
    result.beneficial.add(int(self_index))
    return result


def adjusted_rand_index(a, b) -> float:
    """Adjusted Rand index between two labelings.

    Noise labels (-1) count as singleton clusters.
    """
    la = list(a.labels if isinstance(a, ClusterAssignment) else a)
    lb = list(b.labels if isinstance(b, ClusterAssignment) else b)
    if len(la) != len(lb):
        raise ValueError(f"labelings differ in length: {len(la)} vs {len(lb)}")
    n = len(la)

    def expand(labels):
        out, nxt = [], max([v for v in labels] + [0]) + 1
        for v in labels:
            if v == NOISE:
                out.append(nxt)
                nxt += 1
            else:
                out.append(v)
        return np.unique(out, return_inverse=True)[1]

    ia, ib = expand(la), expand(lb)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)

    def pairs(v):
        v = np.asarray(v, dtype=np.float64)
        return float((v * (v - 1) / 2).sum())

    index = pairs(table)
    sum_a = pairs(table.sum(axis=1))
    sum_b = pairs(table.sum(axis=0))
    total = n * (n - 1) / 2
    expected = sum_a * sum_b / total if total else 0.0
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        # both partitions trivial (all-in-one or all-singletons) and equal
        return 1.0
    return (index - expected) / (max_index - expected)
