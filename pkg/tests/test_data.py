import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pfedlia.data import (
    ConfigurationError,
    Examples,
    IdxCountMismatchError,
    IdxFormatError,
    IdxTruncatedError,
    PartitionSpec,
    SyntheticSpec,
    class_means,
    generate_synthetic,
    load_idx,
    partition,
    partition_noisy,
    partition_pathological,
    shift_features,
    split_train_val,
    write_idx,
)


def tagged(num_classes=10, per_class=40):
    """Examples whose single feature is the example's index, so every
    example can be traced through a partition."""
    n = num_classes * per_class
    return Examples(np.arange(n, dtype=np.float64)[:, None], np.repeat(np.arange(num_classes), per_class))


def ids(examples):
    return examples.X[:, 0].astype(int).tolist()


def all_ids(result):
    out = []
    for s in result.shards:
        out += ids(s.train) + ids(s.validation)
    return out


# -- synthetic ------------------------------------------------------------


def test_synthetic_shape_and_labels():
    data = generate_synthetic(SyntheticSpec(4, 3, 25, seed=1))
    assert data.X.shape == (100, 3)
    assert np.bincount(data.y).tolist() == [25] * 4


def test_closest_means_sit_at_the_separation():
    spec = SyntheticSpec(6, 5, 1, class_separation=3.5, seed=2)
    m = class_means(spec)
    gaps = [np.linalg.norm(m[a] - m[b]) for a in range(6) for b in range(a + 1, 6)]
    assert min(gaps) == pytest.approx(3.5)


def test_synthetic_is_seeded():
    a = generate_synthetic(SyntheticSpec(3, 2, 10, seed=5))
    b = generate_synthetic(SyntheticSpec(3, 2, 10, seed=5))
    c = generate_synthetic(SyntheticSpec(3, 2, 10, seed=6))
    assert np.array_equal(a.X, b.X)
    assert not np.array_equal(a.X, c.X)


def test_examples_validation():
    with pytest.raises(ValueError):
        Examples(np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        Examples(np.zeros((3, 2)), np.zeros(2))


# -- split ------------------------------------------------------------------


@pytest.mark.parametrize("n", [4, 5, 7, 40, 41])
def test_split_is_three_to_one(n):
    train, val = split_train_val(tagged(1, n), seed=0)
    assert len(train) == (3 * n) // 4
    assert sorted(ids(train) + ids(val)) == list(range(n))


def test_split_needs_four_examples():
    with pytest.raises(ConfigurationError):
        split_train_val(tagged(1, 3), seed=0)


# -- pathological ----------------------------------------------------------


def test_pathological_conserves_every_example_once():
    data = tagged()
    result = partition_pathological(data, PartitionSpec("pathological", 5, 20, seed=3))
    assert sorted(all_ids(result)) == list(range(len(data)))


def test_pathological_purity():
    data = tagged()
    result = partition(data, PartitionSpec("pathological", 5, 20, seed=3))
    l2c = result.label_to_cluster
    assert sorted(l2c) == list(range(10))
    assert sorted(np.bincount(list(l2c.values()))) == [2] * 5
    for s in result.shards:
        for label in s.train.labels() | s.validation.labels():
            assert l2c[label] == s.true_cluster


def test_pathological_clusters_are_contiguous_client_blocks():
    result = partition(tagged(), PartitionSpec("pathological", 5, 20, seed=0))
    assert result.true_clusters == [c for c in range(5) for _ in range(4)]


def test_pathological_is_deterministic():
    spec = PartitionSpec("pathological", 5, 20, seed=9)
    a, b = partition(tagged(), spec), partition(tagged(), spec)
    assert all(ids(x.train) == ids(y.train) for x, y in zip(a.shards, b.shards))
    c = partition(tagged(), PartitionSpec("pathological", 5, 20, seed=10))
    assert any(ids(x.train) != ids(y.train) for x, y in zip(a.shards, c.shards))


def test_too_many_clusters_is_a_config_error():
    with pytest.raises(ConfigurationError):
        partition(tagged(3), PartitionSpec("pathological", 5, 20))


# -- noisy ------------------------------------------------------------------


def test_noisy_probability_zero_equals_pathological():
    data = tagged()
    a = partition_noisy(data, PartitionSpec("noisy", 5, 20, 1, 0.0, seed=4))
    b = partition_pathological(data, PartitionSpec("pathological", 5, 20, seed=4))
    for x, y in zip(a.shards, b.shards):
        assert ids(x.train) == ids(y.train) and ids(x.validation) == ids(y.validation)


@pytest.mark.parametrize("extra", [1, 2])
def test_noisy_bound_and_conservation(extra):
    data = tagged(per_class=100)
    result = partition(data, PartitionSpec("noisy", 5, 20, extra, 0.5, seed=1))
    assert sorted(all_ids(result)) == list(range(len(data)))
    l2c = result.label_to_cluster
    noisy_clients = 0
    for s in result.shards:
        labels = s.train.labels() | s.validation.labels()
        outside = {lab for lab in labels if l2c[lab] != s.true_cluster}
        assert len(outside) <= extra
        noisy_clients += bool(outside)
    assert 0 < noisy_clients < 20


def test_noisy_extra_examples_are_not_shared():
    result = partition(tagged(per_class=100), PartitionSpec("noisy", 5, 20, 1, 1.0, seed=2))
    seen = all_ids(result)
    assert len(seen) == len(set(seen))
    for s in result.shards:
        labels = s.train.labels() | s.validation.labels()
        assert any(result.label_to_cluster[lab] != s.true_cluster for lab in labels)


def test_noisy_needs_an_extra_label():
    with pytest.raises(ConfigurationError):
        partition(tagged(), PartitionSpec("noisy", 5, 20, 0, 0.5))


@settings(max_examples=25, deadline=None)
@given(
    clusters=st.integers(1, 5),
    per_cluster=st.integers(1, 4),
    prob=st.sampled_from([0.0, 0.5, 1.0]),
    seed=st.integers(0, 1000),
)
def test_partition_conservation_property(clusters, per_cluster, prob, seed):
    data = tagged(num_classes=10, per_class=60)
    scheme = "noisy" if clusters > 1 else "pathological"
    spec = PartitionSpec(scheme, clusters, clusters * per_cluster, 1, prob, seed)
    result = partition(data, spec)
    assert sorted(all_ids(result)) == list(range(len(data)))
    for s in result.shards:
        assert len(s.train) == (3 * len(s)) // 4


# -- iid and feature shift --------------------------------------------------


def test_iid_partition_and_shift():
    data = tagged()
    result = partition(data, PartitionSpec("iid", 4, 8, seed=0))
    assert sorted(all_ids(result)) == list(range(len(data)))
    shifted = shift_features(result, 5.0, seed=1)
    for a, b in zip(result.shards, shifted.shards):
        delta = b.train.X - a.train.X
        assert np.allclose(np.linalg.norm(delta, axis=1), 5.0)
        assert np.array_equal(a.train.y, b.train.y)


# -- IDX ----------------------------------------------------------------------


def test_idx_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, (7, 3, 4), dtype=np.uint8)
    labels = rng.integers(0, 10, 7, dtype=np.uint8)
    write_idx(images, labels, tmp_path / "img", tmp_path / "lab")
    data = load_idx(tmp_path / "img", tmp_path / "lab")
    assert data.X.shape == (7, 12)
    assert np.allclose(data.X * 255, images.reshape(7, -1))
    assert data.y.tolist() == labels.tolist()


def test_idx_header_layout(tmp_path):
    write_idx(np.zeros((2, 2, 2), np.uint8), np.array([1, 2], np.uint8), tmp_path / "i", tmp_path / "l")
    raw = (tmp_path / "i").read_bytes()
    assert struct.unpack(">4I", raw[:16]) == (0x803, 2, 2, 2)
    assert struct.unpack(">2I", (tmp_path / "l").read_bytes()[:8]) == (0x801, 2)


def test_idx_errors(tmp_path):
    write_idx(np.zeros((3, 2, 2), np.uint8), np.zeros(3, np.uint8), tmp_path / "i", tmp_path / "l")
    with pytest.raises(IdxFormatError):
        load_idx(tmp_path / "l", tmp_path / "l")
    (tmp_path / "short").write_bytes((tmp_path / "i").read_bytes()[:-1])
    with pytest.raises(IdxTruncatedError):
        load_idx(tmp_path / "short", tmp_path / "l")
    (tmp_path / "tiny").write_bytes(b"\x00\x00")
    with pytest.raises(IdxTruncatedError):
        load_idx(tmp_path / "tiny", tmp_path / "l")
    (tmp_path / "headless").write_bytes(struct.pack(">2I", 0x803, 3))
    with pytest.raises(IdxTruncatedError):
        load_idx(tmp_path / "headless", tmp_path / "l")
    write_idx(np.zeros((2, 2, 2), np.uint8), np.zeros(2, np.uint8), tmp_path / "i2", tmp_path / "l2")
    with pytest.raises(IdxCountMismatchError):
        load_idx(tmp_path / "i", tmp_path / "l2")
