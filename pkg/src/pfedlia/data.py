"""Datasets, non-IID client partitions and IDX loading."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import seeding

PATHOLOGICAL = "pathological"
NOISY = "noisy"
IID = "iid"
SCHEMES = (PATHOLOGICAL, NOISY, IID)

# fraction of every owner's per-label chunk that noisy clients may take
NOISY_RESERVE = 0.2

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Examples:
    """A batch of labelled examples: ``X`` is (n, d) float64, ``y`` is (n,) int."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if X.ndim != 2:
            raise ValueError(f"features must be a 2-d array, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> Examples:
        idx = np.asarray(idx, dtype=np.int64)
        return Examples(self.X[idx], self.y[idx])

    def labels(self) -> set[int]:
        return set(int(v) for v in np.unique(self.y))

    @staticmethod
    def concat(parts: list[Examples], dim: int | None = None) -> Examples:
        parts = [p for p in parts if len(p)]
        if not parts:
            return Examples(np.zeros((0, dim or 0)), np.zeros(0, dtype=np.int64))
        return Examples(
            np.concatenate([p.X for p in parts]), np.concatenate([p.y for p in parts])
        )


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 10
    input_dim: int = 16
    examples_per_class: int = 500
    class_separation: float = 8.0
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 1 or self.input_dim < 1 or self.examples_per_class < 1:
            raise ConfigurationError("synthetic sizes must be positive")
        if self.class_separation <= 0 or self.noise_sigma < 0:
            raise ConfigurationError("class_separation must be > 0, noise_sigma >= 0")


def class_means(spec: SyntheticSpec) -> np.ndarray:
    """Random Gaussian directions rescaled so the closest pair of means sits
    exactly ``class_separation`` apart."""
    rng = seeding.rng(spec.seed, seeding.DATA, 0)
    means = rng.standard_normal((spec.num_classes, spec.input_dim))
    if spec.num_classes == 1:
        return np.zeros_like(means)
    gaps = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=2)
    closest = gaps[np.triu_indices(spec.num_classes, k=1)].min()
    return means * (spec.class_separation / closest)


def generate_synthetic(spec: SyntheticSpec) -> Examples:
    means = class_means(spec)
    rng = seeding.rng(spec.seed, seeding.DATA, 1)
    n = spec.examples_per_class
    X = np.repeat(means, n, axis=0)
    X = X + spec.noise_sigma * rng.standard_normal(X.shape)
    y = np.repeat(np.arange(spec.num_classes), n)
    return Examples(X, y)


@dataclass(frozen=True)
class PartitionSpec:
    scheme: str = PATHOLOGICAL
    num_clusters: int = 5
    num_clients: int = 100
    noisy_extra_labels: int = 1
    noisy_probability: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown partition scheme {self.scheme!r}")
        if self.num_clusters < 1 or self.num_clients < 1:
            raise ConfigurationError("num_clusters and num_clients must be positive")
        if self.noisy_extra_labels < 0:
            raise ConfigurationError("noisy_extra_labels must be >= 0")
        if not 0.0 <= self.noisy_probability <= 1.0:
            raise ConfigurationError("noisy_probability must lie in [0, 1]")


@dataclass(eq=False)
class ClientShard:
    client_id: int
    train: Examples
    validation: Examples
    # ground truth, only read by the oracle baseline and by evaluation
    true_cluster: int

    def __len__(self) -> int:
        return len(self.train) + len(self.validation)


@dataclass(eq=False)
class PartitionResult:
    shards: list[ClientShard]
    label_to_cluster: dict[int, int] = field(default_factory=dict)

    @property
    def true_clusters(self) -> list[int]:
        return [s.true_cluster for s in self.shards]


def split_train_val(examples: Examples, seed: int) -> tuple[Examples, Examples]:
    """Seeded 3:1 split; the first 75% of a random permutation is training."""
    n = len(examples)
    if n < 4:
        raise ConfigurationError(f"need at least 4 examples to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = (3 * n) // 4
    return examples.subset(order[:n_train]), examples.subset(order[n_train:])


def _even_counts(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def _clients_by_cluster(num_clients: int, num_clusters: int) -> list[list[int]]:
    out, start = [], 0
    for count in _even_counts(num_clients, num_clusters):
        out.append(list(range(start, start + count)))
        start += count
    return out


def _label_chunks(data: Examples, spec: PartitionSpec):
    """Core pathological layout.

    Returns ``label_to_cluster``, the client lists per cluster and, for
    every (label, owner client), the indices into ``data`` that owner holds.
    """
    classes = sorted(data.labels())
    if spec.num_clusters > len(classes):
        raise ConfigurationError(
            f"{spec.num_clusters} clusters but only {len(classes)} labels"
        )
    members = _clients_by_cluster(spec.num_clients, spec.num_clusters)
    if any(not m for m in members):
        raise ConfigurationError("fewer clients than clusters")
    rng = seeding.rng(spec.seed, seeding.PARTITION, 0)
    shuffled = [classes[i] for i in rng.permutation(len(classes))]
    label_to_cluster = {}
    for cluster, group in enumerate(np.array_split(np.array(shuffled), spec.num_clusters)):
        for label in group:
            label_to_cluster[int(label)] = cluster

    chunks: dict[tuple[int, int], np.ndarray] = {}
    for label in classes:
        pool = np.flatnonzero(data.y == label)
        pool = pool[seeding.rng(spec.seed, seeding.PARTITION, 1, label).permutation(len(pool))]
        owners = members[label_to_cluster[label]]
        for client, part in zip(owners, np.array_split(pool, len(owners))):
            chunks[(label, client)] = part
    return label_to_cluster, members, chunks


def _build_shards(data, spec, members, indices_per_client) -> list[ClientShard]:
    cluster_of = {c: k for k, group in enumerate(members) for c in group}
    shards = []
    for client in range(spec.num_clients):
        examples = data.subset(np.concatenate(indices_per_client[client]))
        train, val = split_train_val(
            examples, seeding.derive_seed(spec.seed, seeding.SPLIT, client)
        )
        shards.append(ClientShard(client, train, val, cluster_of[client]))
    return shards


def partition_pathological(data: Examples, spec: PartitionSpec) -> PartitionResult:
    """Every label belongs to exactly one cluster; clients of a cluster
    share that cluster's label pools in equal shards."""
    label_to_cluster, members, chunks = _label_chunks(data, spec)
    per_client: dict[int, list[np.ndarray]] = {c: [] for c in range(spec.num_clients)}
    for (label, client) in sorted(chunks):
        per_client[client].append(chunks[(label, client)])
    return PartitionResult(_build_shards(data, spec, members, per_client), label_to_cluster)


def partition_noisy(data: Examples, spec: PartitionSpec) -> PartitionResult:
    """Pathological layout, then each client with probability
    ``noisy_probability`` also receives ``noisy_extra_labels`` labels from
    outside its cluster.

    Extra examples come from the reserved tail (``NOISY_RESERVE``) of every
    owner's chunk of that label; a reserve nobody asks for stays with its
    owner, so probability zero reproduces the pathological partition.
    """
    if spec.noisy_extra_labels < 1:
        raise ConfigurationError("noisy partition needs noisy_extra_labels >= 1")
    label_to_cluster, members, chunks = _label_chunks(data, spec)
    classes = sorted(label_to_cluster)

    receivers: dict[int, list[int]] = {label: [] for label in classes}
    for cluster, group in enumerate(members):
        outside = [label for label in classes if label_to_cluster[label] != cluster]
        if len(outside) < spec.noisy_extra_labels:
            raise ConfigurationError(
                f"cluster {cluster} has only {len(outside)} labels outside it, "
                f"need {spec.noisy_extra_labels}"
            )
        for client in group:
            rng = seeding.rng(spec.seed, seeding.NOISY, client)
            if rng.random() < spec.noisy_probability:
                for label in rng.choice(outside, spec.noisy_extra_labels, replace=False):
                    receivers[int(label)].append(client)

    per_client: dict[int, list[np.ndarray]] = {c: [] for c in range(spec.num_clients)}
    extra: dict[int, list[np.ndarray]] = {c: [] for c in range(spec.num_clients)}
    for (label, client) in sorted(chunks):
        part = chunks[(label, client)]
        if receivers[label]:
            n_reserved = int(math.floor(NOISY_RESERVE * len(part)))
            keep, reserved = part[: len(part) - n_reserved], part[len(part) - n_reserved :]
            per_client[client].append(keep)
            chunks[(label, client)] = reserved
        else:
            per_client[client].append(part)
    for label in classes:
        if not receivers[label]:
            continue
        owners = members[label_to_cluster[label]]
        pool = np.concatenate([chunks[(label, o)] for o in owners])
        for client, part in zip(sorted(receivers[label]), np.array_split(pool, len(receivers[label]))):
            extra[client].append(part)
    for client in per_client:
        per_client[client].extend(extra[client])
    return PartitionResult(_build_shards(data, spec, members, per_client), label_to_cluster)


def partition_iid(data: Examples, spec: PartitionSpec) -> PartitionResult:
    """Uniform random shards. Clients are still grouped into
    ``num_clusters`` nominal clusters (see :func:`shift_features`)."""
    members = _clients_by_cluster(spec.num_clients, spec.num_clusters)
    order = seeding.rng(spec.seed, seeding.PARTITION, 2).permutation(len(data))
    per_client = {
        c: [part] for c, part in enumerate(np.array_split(order, spec.num_clients))
    }
    return PartitionResult(_build_shards(data, spec, members, per_client), {})


def partition(data: Examples, spec: PartitionSpec) -> PartitionResult:
    if spec.scheme == PATHOLOGICAL:
        return partition_pathological(data, spec)
    if spec.scheme == NOISY:
        return partition_noisy(data, spec)
    return partition_iid(data, spec)


def shift_features(result: PartitionResult, shift: float, seed: int) -> PartitionResult:
    """Add a per-cluster offset of norm ``shift`` to every client's features.

    Emulates feature-space heterogeneity: all clusters keep the same label
    set but see inputs from displaced distributions.
    """
    num_clusters = max(result.true_clusters) + 1
    rng = seeding.rng(seed, seeding.DATA, 2)
    dim = result.shards[0].train.dim
    offsets = rng.standard_normal((num_clusters, dim))
    offsets *= shift / np.linalg.norm(offsets, axis=1, keepdims=True)
    shards = [
        ClientShard(
            s.client_id,
            Examples(s.train.X + offsets[s.true_cluster], s.train.y),
            Examples(s.validation.X + offsets[s.true_cluster], s.validation.y),
            s.true_cluster,
        )
        for s in result.shards
    ]
    return PartitionResult(shards, dict(result.label_to_cluster))


class IdxError(ValueError):
    pass


class IdxFormatError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxCountMismatchError(IdxError):
    pass


def _read_idx(path: Path, magic: int, n_dims: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    header = 4 + 4 * n_dims
    if len(raw) < 4:
        raise IdxTruncatedError(f"{path}: file shorter than the 4-byte magic number")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise IdxFormatError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(raw) < header:
        raise IdxTruncatedError(f"{path}: file shorter than its {header}-byte header")
    dims = struct.unpack(f">{n_dims}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) < header + size:
        raise IdxTruncatedError(
            f"{path}: expected {size} data bytes, found {len(raw) - header}"
        )
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_idx(images_path, labels_path) -> Examples:
    """Read an MNIST-layout IDX image/label pair; pixels scaled to [0, 1]."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise IdxCountMismatchError(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Examples(X, labels.astype(np.int64))


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write uint8 images (n, rows, cols) and labels (n,) in IDX layout."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    Path(images_path).write_bytes(
        struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape) + images.tobytes()
    )
    Path(labels_path).write_bytes(
        struct.pack(">2I", IDX_LABELS_MAGIC, labels.shape[0]) + labels.tobytes()
    )
