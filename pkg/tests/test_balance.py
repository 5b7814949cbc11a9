import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kernelforge.balance import CboConfig, cbo_oversample, cluster_balanced_rows, kmeans
from kernelforge.datasets import DataError, Dataset, FeatureManifest


def make(n_pos, n_neg, seed=0, d=2):
    rng = np.random.default_rng(seed)
    y = np.array([1] * n_pos + [-1] * n_neg)
    return Dataset(rng.random((y.size, d)), y, FeatureManifest.single(d))


def test_single_cluster_matches_majority():
    out = cbo_oversample(make(10, 30), CboConfig(k_per_class=1))
    assert out.class_counts() == {1: 30, -1: 30}


def test_largest_cluster_rule():
    # two well separated blobs of sizes 8 and 2
    X = np.vstack([np.zeros((8, 2)) + [0.1, 0.1], np.zeros((2, 2)) + [0.9, 0.9]])
    X += np.random.default_rng(0).normal(0, 0.01, X.shape)
    rows = cluster_balanced_rows(X, CboConfig(k_per_class=2), np.random.default_rng(0))
    assert rows.size == 16
    assert np.sum(rows >= 8) == 8


def test_same_seed_same_output():
    ds = make(12, 40, seed=3)
    a = cbo_oversample(ds, CboConfig(seed=9))
    b = cbo_oversample(ds, CboConfig(seed=9))
    assert a.X.tobytes() == b.X.tobytes()
    np.testing.assert_array_equal(a.index, b.index)


def test_empty_class_rejected():
    with pytest.raises(DataError):
        cbo_oversample(make(5, 0))
    with pytest.raises(ValueError):
        CboConfig(k_per_class=0)


def test_kmeans_handles_duplicates():
    X = np.zeros((6, 2))
    labels = kmeans(X, 3, rng=0)
    assert set(labels.tolist()) == {0, 1, 2}


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 6), st.integers(0, 10**6))
def test_cbo_properties(n_pos, n_neg, k, seed):
    ds = make(n_pos, n_neg, seed=seed)
    out = cbo_oversample(ds, CboConfig(k_per_class=k, seed=seed))
    counts = out.class_counts()
    assert counts[1] == counts[-1]
    # originals kept, in order, followed only by copies of existing rows
    np.testing.assert_array_equal(out.index[: len(ds)], ds.index)
    np.testing.assert_array_equal(out.X[len(ds):], ds.X[out.index[len(ds):]])
    np.testing.assert_array_equal(out.y, ds.y[out.index])
