"""Vector K-means over coefficient rows: k-means++ seeding plus Lloyd."""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, NumericError

SCOPE_PER_LAYER = "per_layer"
SCOPE_GLOBAL = "global"


@dataclass(frozen=True)
class ClusterConfig:
    k: int = 16
    scope: str = SCOPE_PER_LAYER
    max_iters: int = 300
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.tol < 0:
            raise ConfigError("tol must be >= 0")
        if self.scope not in (SCOPE_PER_LAYER, SCOPE_GLOBAL):
            raise ConfigError(f"unknown scope {self.scope!r}")


@dataclass
class Codebook:
    centroids: np.ndarray  # (k, D)
    assignments: np.ndarray  # (n,) int32


def _sq_dists(points, centroids):
    # (n, k) squared Euclidean distances
    return (
        np.sum(points * points, axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + np.sum(centroids * centroids, axis=1)[None, :]
    )


def assign_points(points, centroids):
    """Nearest-centroid index per point; ties go to the lowest index."""
    points = np.asarray(points, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    if points.shape[1] != centroids.shape[1]:
        raise DimensionError(
            f"points dim {points.shape[1]} != centroid dim {centroids.shape[1]}")
    return np.argmin(_sq_dists(points, centroids), axis=1).astype(np.int32)


def _kmeanspp_seed(points, k, rng):
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    centroids[0] = points[rng.integers(n)]
    closest = np.sum((points - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            centroids[i] = points[rng.integers(n)]
            continue
        idx = rng.choice(n, p=closest / total)
        centroids[i] = points[idx]
        np.minimum(closest, np.sum((points - centroids[i]) ** 2, axis=1), out=closest)
    return centroids


def kmeans_fit(points, cfg):
    """Lloyd iterations until the relative objective decrease is < cfg.tol.

    Returns (Codebook, objective trace). The trace holds the objective
    after each assignment step and is non-increasing.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 1:
        raise DimensionError(f"expected (n, D) points, got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise NumericError("non-finite points passed to kmeans_fit")
    n = points.shape[0]
    if cfg.k > n:
        raise ConfigError(f"k={cfg.k} exceeds point count n={n}")
    rng = np.random.default_rng(cfg.seed)
    centroids = _kmeanspp_seed(points, cfg.k, rng)
    trace = []
    assignments = None
    prev_assignments = None
    for _ in range(cfg.max_iters):
        dists = _sq_dists(points, centroids)
        assignments = np.argmin(dists, axis=1).astype(np.int32)
        obj = float(np.take_along_axis(dists, assignments[:, None].astype(np.intp),
                                       axis=1).sum())
        obj = max(obj, 0.0)  # guard tiny negative from the expanded-form distance
        trace.append(obj)
        if prev_assignments is not None and np.array_equal(assignments, prev_assignments):
            break  # exact fixed point: centroids are already the cluster means
        if len(trace) >= 2:
            prev = trace[-2]
            if prev == 0.0 or (prev - obj) / prev < cfg.tol:
                break
        prev_assignments = assignments
        new_centroids = centroids.copy()
        counts = np.bincount(assignments, minlength=cfg.k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, assignments, points)
        nonempty = counts > 0
        new_centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        # re-seed empty clusters at the currently worst-fit point
        empty = np.flatnonzero(~nonempty)
        if empty.size:
            point_err = np.take_along_axis(
                _sq_dists(points, new_centroids),
                assignments[:, None].astype(np.intp), axis=1).ravel()
            order = np.argsort(-point_err)
            for slot, c_idx in enumerate(empty):
                new_centroids[c_idx] = points[order[slot]]
        centroids = new_centroids
    assignments = assign_points(points, centroids)
    return Codebook(centroids=centroids, assignments=assignments), trace
