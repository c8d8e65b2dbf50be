import numpy as np
import pytest

from kdlab import data
from kdlab.errors import InvalidSpec


@pytest.mark.parametrize("family", data.FAMILIES)
def test_families_shape_and_balance(family):
    ds = data.make_synthetic(family, 60, 2, 3, 0.1, seed=0)
    assert ds.inputs.shape == (60, 3)
    assert ds.hard_labels.shape == (60,)
    counts = np.bincount(ds.hard_labels, minlength=2)
    assert abs(counts[0] - counts[1]) <= 1
    # generation standardizes per coordinate
    assert np.allclose(ds.inputs.mean(axis=0), 0.0, atol=1e-9)
    assert np.allclose(ds.inputs.std(axis=0), 1.0, atol=1e-9)


def test_gaussian_blobs_multiclass_balance():
    ds = data.make_synthetic("gaussian_blobs", 64, 5, 4, 0.2, seed=1)
    counts = np.bincount(ds.hard_labels, minlength=5)
    assert counts.max() - counts.min() <= 1
    assert ds.num_classes == 5


def test_make_synthetic_deterministic():
    a = data.make_synthetic("two_rings", 32, 2, 2, 0.1, seed=7)
    b = data.make_synthetic("two_rings", 32, 2, 2, 0.1, seed=7)
    c = data.make_synthetic("two_rings", 32, 2, 2, 0.1, seed=8)
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.hard_labels, b.hard_labels)
    assert not np.array_equal(a.inputs, c.inputs)


def test_make_synthetic_validation():
    with pytest.raises(InvalidSpec):
        data.make_synthetic("nope", 10, 2, 2, 0.1, seed=0)
    with pytest.raises(InvalidSpec):
        data.make_synthetic("two_rings", 10, 3, 2, 0.1, seed=0)  # d != 2
    with pytest.raises(InvalidSpec):
        data.make_synthetic("gaussian_blobs", 10, 2, 1, 0.1, seed=0)  # p < 2
    with pytest.raises(InvalidSpec):
        data.make_synthetic("gaussian_blobs", 2, 3, 2, 0.1, seed=0)  # n < d


def test_dataset_validation():
    with pytest.raises(InvalidSpec):
        data.LabeledDataset(np.zeros((4, 2)), np.array([0, 1, 2, 0]), num_classes=2)
    with pytest.raises(InvalidSpec):
        data.LabeledDataset(np.zeros((4, 2)), np.zeros(3, dtype=int), num_classes=2)


def test_binarize_labels():
    ds = data.make_synthetic("gaussian_blobs", 40, 4, 2, 0.2, seed=0)
    b = data.binarize_labels(ds, boundary=2)
    assert b.num_classes == 2
    assert np.array_equal(b.hard_labels, (ds.hard_labels >= 2).astype(np.int64))
    with pytest.raises(InvalidSpec):
        data.binarize_labels(ds, boundary=0)
    with pytest.raises(InvalidSpec):
        data.binarize_labels(ds, boundary=4)


def test_encode_targets_one_hot():
    ds = data.make_synthetic("gaussian_blobs", 12, 3, 2, 0.2, seed=0)
    t = data.encode_targets(ds, "one_hot")
    assert t.values.shape == (12, 3)
    assert np.array_equal(t.values.sum(axis=1), np.ones(12))
    assert np.array_equal(t.values.argmax(axis=1), ds.hard_labels)


def test_encode_targets_signed_binary():
    ds = data.make_synthetic("two_rings", 10, 2, 2, 0.1, seed=0)
    t = data.encode_targets(ds, "signed_binary")
    assert t.values.shape == (10, 1)
    assert np.array_equal(t.values[:, 0], ds.hard_labels * 2.0 - 1.0)
    multi = data.make_synthetic("gaussian_blobs", 10, 3, 2, 0.1, seed=0)
    with pytest.raises(InvalidSpec):
        data.encode_targets(multi, "signed_binary")
    with pytest.raises(InvalidSpec):
        data.encode_targets(ds, "gray_code")


def test_random_targets():
    a = data.random_targets(50, 1, "signed_binary", seed=0)
    b = data.random_targets(50, 1, "signed_binary", seed=0)
    assert a.kind == "random"
    assert np.array_equal(a.values, b.values)
    assert set(np.unique(a.values)) <= {-1.0, 1.0}
    oh = data.random_targets(50, 4, "one_hot", seed=1)
    assert oh.values.shape == (50, 4)
    assert np.array_equal(oh.values.sum(axis=1), np.ones(50))
    with pytest.raises(InvalidSpec):
        data.random_targets(0, 1, "signed_binary", seed=0)


def test_soft_binary_targets_values():
    logits = np.array([0.0, 2.0, -2.0])
    t = data.soft_binary_targets(logits, tau=2.0)
    expected = 2.0 / (1.0 + np.exp(-logits / 2.0)) - 1.0
    assert np.allclose(t.values[:, 0], expected)
    assert t.kind == "soft"
    with pytest.raises(InvalidSpec):
        data.soft_binary_targets(logits, tau=0.0)


def test_target_matrix_flat_layout():
    t = data.TargetMatrix(np.array([[1.0, 2.0], [3.0, 4.0]]), kind="soft")
    # example-major, class-minor
    assert np.array_equal(t.flat, [1.0, 2.0, 3.0, 4.0])


def test_csv_round_trip():
    ds = data.make_synthetic("xor_grid", 24, 2, 3, 0.05, seed=4)
    text = data.to_csv(ds)
    assert text.splitlines()[0] == "x0,x1,x2,label"
    back = data.from_csv(text, num_classes=2)
    assert np.array_equal(back.inputs, ds.inputs)
    assert np.array_equal(back.hard_labels, ds.hard_labels)


def test_from_csv_errors():
    with pytest.raises(InvalidSpec):
        data.from_csv("x0,x1,tag\n0.0,0.0,0\n")
    with pytest.raises(InvalidSpec):
        data.from_csv("x0,label\n0.0,0,9\n")
