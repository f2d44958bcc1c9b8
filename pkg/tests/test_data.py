import struct

import numpy as np
import pytest

from minedetect.data import (
    LabeledDataset,
    corrupt_features,
    dirichlet_partition,
    generate_synthetic,
    load_idx,
    stratified_split,
    synthetic_centers,
)
from minedetect.exceptions import DataFormatError, EmptyDatasetError, InfeasiblePartitionError


def idx_images(images, magic=0x00000803):
    images = np.asarray(images, dtype=np.uint8)
    n, r, c = images.shape
    return struct.pack(">IIII", magic, n, r, c) + images.tobytes()


def idx_labels(labels, magic=0x00000801):
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", magic, len(labels)) + labels.tobytes()


@pytest.fixture
def idx_pair(tmp_path):
    def write(img_bytes, lab_bytes):
        ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
        ip.write_bytes(img_bytes)
        lp.write_bytes(lab_bytes)
        return ip, lp

    return write


def test_synthetic_balanced_histogram():
    ds = generate_synthetic(100, 4, 8, 3.0, 0)
    assert ds.class_counts().tolist() == [25, 25, 25, 25]
    assert generate_synthetic(10, 4, 8, 3.0, 0).class_counts().tolist() == [3, 3, 2, 2]


def test_synthetic_deterministic():
    a, b = generate_synthetic(50, 3, 4, 2.0, 9), generate_synthetic(50, 3, 4, 2.0, 9)
    assert np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)


def test_synthetic_center_separation():
    for k, d in [(4, 8), (4, 2), (6, 3)]:
        C = synthetic_centers(k, d, 3.0)
        dist = np.linalg.norm(C[:, None] - C[None], axis=2)
        assert dist[~np.eye(k, dtype=bool)].min() >= 3.0 - 1e-12


def test_synthetic_nearest_centroid_oracle():
    ds = generate_synthetic(2000, 4, 2, 10.0, 1)
    # class means estimated from the data stand in for the generating centers
    means = np.stack([ds.features[ds.labels == k].mean(axis=0) for k in range(4)])
    pred = np.argmin(np.linalg.norm(ds.features[:, None] - means[None], axis=2), axis=1)
    assert (pred == ds.labels).mean() > 0.99


def test_synthetic_features_centred():
    ds = generate_synthetic(4000, 4, 8, 5.0, 2)
    assert np.all(np.abs(ds.features.mean(axis=0)) < 0.1)


def test_load_idx_hand_built_fixture(idx_pair):
    img = idx_images([[[0, 255], [51, 102]], [[255, 0], [0, 255]]])
    # header bytes spelled out: count 2 is 00 00 00 02, not 02 00 00 00
    assert img[:16] == bytes.fromhex("00000803" "00000002" "00000002" "00000002")
    ds = load_idx(*idx_pair(img, idx_labels([7, 3])))
    assert ds.features.tolist() == [[0.0, 1.0, 0.2, 0.4], [1.0, 0.0, 0.0, 1.0]]
    assert ds.labels.tolist() == [7, 3]
    assert len(ds) == 2 and ds.n_classes == 8


@pytest.mark.parametrize(
    "img, lab, field",
    [
        (idx_images(np.zeros((2, 2, 2))), idx_labels([1, 2, 3]), "count"),
        (b"", idx_labels([1]), "magic"),
        (idx_images(np.zeros((1, 2, 2)), magic=0x00000801), idx_labels([1]), "magic"),
        (idx_images(np.zeros((2, 2, 2)))[:-1], idx_labels([1, 2]), "payload"),
        (idx_images(np.zeros((1, 2, 2)))[:10], idx_labels([1]), "dims"),
        (idx_images(np.zeros((0, 2, 2))), idx_labels([]), "count"),
    ],
)
def test_load_idx_format_errors(idx_pair, img, lab, field):
    with pytest.raises(DataFormatError) as info:
        load_idx(*idx_pair(img, lab))
    assert info.value.field == field


def test_partition_single_client():
    ds = generate_synthetic(30, 3, 2, 2.0, 0)
    plan = dirichlet_partition(ds, 1, 0.9, 0)
    assert plan.shards[0].tolist() == list(range(30))


@pytest.mark.parametrize("lam, seed", [(0.9, 0), (0.1, 1), (0.01, 2), (5.0, 3)])
def test_partition_invariants(lam, seed):
    ds = generate_synthetic(500, 4, 8, 3.0, seed)
    plan = dirichlet_partition(ds, 40, lam, seed)
    flat = np.concatenate(plan.shards)
    assert len(flat) == len(ds)
    assert np.array_equal(np.sort(flat), np.arange(len(ds)))
    assert min(len(s) for s in plan.shards) >= 1
    assert plan.lam == lam


def test_partition_near_iid_histograms():
    for seed in range(5):
        ds = generate_synthetic(4000, 4, 8, 3.0, seed)
        plan = dirichlet_partition(ds, 40, 1000.0, seed)
        target = ds.class_counts() / 40
        for shard in plan.shards:
            hist = np.bincount(ds.labels[shard], minlength=4)
            assert np.all(np.abs(hist - target) <= 0.2 * target)


def test_partition_skew_grows_as_lambda_shrinks():
    ds = generate_synthetic(4000, 4, 8, 3.0, 0)

    def mean_tv(lam):
        plan = dirichlet_partition(ds, 40, lam, 0)
        tv = []
        for s in plan.shards:
            p = np.bincount(ds.labels[s], minlength=4) / len(s)
            tv.append(0.5 * np.abs(p - 0.25).sum())
        return np.mean(tv)

    assert mean_tv(0.1) > mean_tv(0.9) > mean_tv(100.0)


def test_partition_repair_and_infeasible():
    ds = generate_synthetic(12, 2, 2, 2.0, 0)
    plan = dirichlet_partition(ds, 12, 0.01, 0)
    assert sorted(len(s) for s in plan.shards) == [1] * 12
    with pytest.raises(InfeasiblePartitionError):
        dirichlet_partition(ds, 13, 0.9, 0)


def test_corrupt_zero_sigma_is_identity():
    ds = generate_synthetic(20, 2, 3, 2.0, 0)
    out = corrupt_features(ds, 0.0, 5)
    assert np.array_equal(out.features, ds.features)
    assert out.features is not ds.features


def test_corrupt_noise_moments():
    ds = LabeledDataset(np.zeros((20000, 5)), np.zeros(20000, dtype=int), 2)
    noise = corrupt_features(ds, 1.0, 0).features - ds.features
    assert abs(noise.mean()) < 0.02
    assert abs(noise.var() - 1.0) < 0.05
    assert np.array_equal(corrupt_features(ds, 1.0, 0).labels, ds.labels)


def test_corrupt_independent_seeds():
    ds = LabeledDataset(np.zeros((10000, 1)), np.zeros(10000, dtype=int), 2)
    a = corrupt_features(ds, 1.0, 1).features.ravel()
    b = corrupt_features(ds, 1.0, 2).features.ravel()
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.05


def test_stratified_split_preserves_proportions():
    ds = generate_synthetic(1000, 4, 8, 3.0, 0)
    train, test = stratified_split(ds, 0.2, 0)
    assert len(test) == 200 and len(train) == 800
    assert test.class_counts().tolist() == [50, 50, 50, 50]


def test_dataset_validation():
    with pytest.raises(EmptyDatasetError):
        LabeledDataset(np.zeros((0, 2)), np.zeros(0, dtype=int), 2)
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((2, 2)), np.array([0, 5]), 2)
    with pytest.raises(ValueError):
        LabeledDataset(np.array([[np.nan, 0.0]]), np.array([0]), 2)
