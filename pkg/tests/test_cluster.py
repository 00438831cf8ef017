import numpy as np
import pytest

from imvcc.cluster import kmeans
from imvcc.errors import ParameterError
from imvcc.metrics import acc

from oracles import kmeans_global_optimum


def two_clouds(seed=0, n=20):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, 2)) * 0.5
    b = rng.normal(size=(n, 2)) * 0.5 + 10
    return np.vstack([a, b]), np.repeat([0, 1], n)


def test_separable_clouds():
    x, y = two_clouds()
    res = kmeans(x, 2, seed=1)
    assert acc(y, res.labels) == 1.0
    expect = sum(((x[y == j] - x[y == j].mean(0)) ** 2).sum() for j in (0, 1))
    assert res.inertia == pytest.approx(expect, rel=1e-12)


def test_single_cluster():
    x = np.random.default_rng(2).normal(size=(15, 3))
    res = kmeans(x, 1)
    np.testing.assert_allclose(res.centroids[0], x.mean(0), atol=1e-14)
    assert res.inertia == pytest.approx(x.var(axis=0).sum() * 15, rel=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_matches_exhaustive_optimum(seed):
    x = np.random.default_rng(seed).normal(size=(8, 2))
    res = kmeans(x, 3, seed=seed, restarts=10)
    assert res.inertia == pytest.approx(kmeans_global_optimum(x, 3), rel=1e-10)


def test_k_larger_than_n():
    with pytest.raises(ParameterError):
        kmeans(np.zeros((3, 2)), 4)


def test_monotone_history_and_all_clusters_used():
    x = np.random.default_rng(4).normal(size=(200, 5))
    res = kmeans(x, 7, seed=3, restarts=3)
    assert all(b <= a * (1 + 1e-12) for a, b in zip(res.history, res.history[1:]))
    assert set(res.labels.tolist()) == set(range(7))


def test_empty_cluster_repair_with_duplicates():
    # only two distinct points but k=3: a cluster must be rebuilt from a duplicate
    x = np.array([[0.0, 0.0]] * 5 + [[1.0, 1.0]] * 5)
    res = kmeans(x, 3, seed=0, restarts=2)
    assert set(res.labels.tolist()) == {0, 1, 2}


def test_deterministic():
    x = np.random.default_rng(5).normal(size=(60, 4))
    a, b = kmeans(x, 4, seed=11), kmeans(x, 4, seed=11)
    assert np.array_equal(a.labels, b.labels)


def test_row_permutation_equivariance():
    x, _ = two_clouds(seed=6, n=30)
    perm = np.random.default_rng(7).permutation(len(x))
    a = kmeans(x, 2, seed=0)
    b = kmeans(x[perm], 2, seed=0)
    assert acc(a.labels[perm], b.labels) == 1.0
