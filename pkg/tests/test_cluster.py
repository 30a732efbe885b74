import numpy as np
import pytest

from kanzip.cluster import ClusterConfig, assign_points, kmeans_fit
from kanzip.errors import ConfigError, DimensionError, NumericError

from oracles import kmeans_best_partition


def fit(points, k, seed=0, **kw):
    return kmeans_fit(np.asarray(points, dtype=np.float64),
                      ClusterConfig(k=k, seed=seed, **kw))


def test_invalid_configs():
    with pytest.raises(ConfigError):
        ClusterConfig(k=0)
    with pytest.raises(ConfigError):
        ClusterConfig(scope="per_row")
    with pytest.raises(ConfigError):
        fit(np.zeros((3, 2)), k=5)
    with pytest.raises(DimensionError):
        fit(np.zeros(4), k=2)
    with pytest.raises(NumericError):
        fit([[np.inf, 0.0]], k=1)


def test_k_equals_n_zero_objective(rng):
    points = rng.normal(size=(6, 3))
    cb, trace = fit(points, k=6)
    assert trace[-1] == pytest.approx(0.0, abs=1e-18)
    # every point sits on its own centroid
    assert sorted(cb.assignments.tolist()) == list(range(6))
    for i, a in enumerate(cb.assignments):
        assert np.allclose(cb.centroids[a], points[i])


def test_k_one_is_mean(rng):
    points = rng.normal(size=(20, 4))
    cb, _ = fit(points, k=1)
    assert np.allclose(cb.centroids[0], points.mean(axis=0), atol=1e-12)


def test_four_point_instance():
    points = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
    cb, trace = fit(points, k=2)
    got = {tuple(c) for c in np.round(cb.centroids, 12)}
    assert got == {(0.0, 0.5), (10.0, 0.5)}
    assert trace[-1] == pytest.approx(1.0, abs=1e-12)


def test_multi_restart_reaches_brute_force_optimum(rng):
    points = rng.normal(size=(10, 2)) * np.array([3.0, 1.0])
    best_obj, best_assign = kmeans_best_partition(points, k=3)
    got = min(fit(points, k=3, seed=s)[1][-1] for s in range(20))
    assert abs(got - best_obj) < 1e-9
    # the oracle itself must describe a valid 3-way partition
    assert len(set(best_assign)) == 3


def test_objective_trace_monotone(rng):
    points = rng.normal(size=(200, 8))
    _, trace = fit(points, k=7)
    for prev, cur in zip(trace, trace[1:]):
        assert cur <= prev + 1e-9


def test_result_is_fixed_point(rng):
    points = rng.normal(size=(120, 5))
    cb, _ = fit(points, k=6, tol=0.0, max_iters=500)
    # reassignment does not move any point
    assert np.array_equal(assign_points(points, cb.centroids), cb.assignments)
    # each centroid is the mean of its cluster
    for j in range(6):
        members = points[cb.assignments == j]
        assert members.shape[0] > 0
        assert np.max(np.abs(cb.centroids[j] - members.mean(axis=0))) < 1e-9


def test_seeded_determinism(rng):
    points = rng.normal(size=(80, 3))
    a, ta = fit(points, k=5, seed=42)
    b, tb = fit(points, k=5, seed=42)
    assert np.array_equal(a.centroids, b.centroids)
    assert np.array_equal(a.assignments, b.assignments)
    assert ta == tb


def test_assign_ties_go_to_lowest_index():
    centroids = np.array([[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]])
    got = assign_points(np.array([[0.0, 5.0], [0.9, 0.0]]), centroids)
    assert got.tolist() == [0, 0]


def test_assign_matches_pairwise_oracle(rng):
    points = rng.normal(size=(50, 4))
    centroids = rng.normal(size=(6, 4))
    got = assign_points(points, centroids)
    for i in range(50):
        d = [float(np.sum((points[i] - c) ** 2)) for c in centroids]
        assert got[i] == int(np.argmin(d))


def test_duplicate_points_exceeding_k():
    # 8 copies of 2 distinct points with k=2: both locations must be found
    points = np.repeat(np.array([[0.0, 0.0], [5.0, 5.0]]), 4, axis=0)
    cb, trace = fit(points, k=2)
    assert trace[-1] == pytest.approx(0.0, abs=1e-18)
    assert {tuple(c) for c in cb.centroids} == {(0.0, 0.0), (5.0, 5.0)}
