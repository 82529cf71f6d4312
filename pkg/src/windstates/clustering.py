"""Bisecting k-means over correlation matrices, scored with silhouettes.

Matrices are compared by the Euclidean (Frobenius) distance of their entries.
Clustering starts from a single cluster and repeatedly bisects the cluster
with the largest average internal distance using a restarted, seeded 2-means;
every random choice is derived from the caller's seed so identical inputs
give identical solutions. Cluster labels are 1-based and, when per-epoch wind
speeds are supplied, assigned in ascending order of cluster mean wind speed
so that labels are comparable across runs and turbines.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataError, UsageError

DEFAULT_RESTARTS = 16
_MAX_LLOYD_ITER = 300


def matrix_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two equally shaped matrices."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise UsageError(f"matrix shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(((a - b) ** 2).sum()))


def internal_distance(objects: Sequence[np.ndarray], centroid: np.ndarray) -> float:
    """Average distance of a cluster's members to its centroid."""
    if len(objects) == 0:
        raise UsageError("empty cluster")
    return float(np.mean([matrix_distance(o, centroid) for o in objects]))


def _as_points(objects: Sequence[np.ndarray]) -> tuple[np.ndarray, tuple[int, ...]]:
    """Stack matrices into an (n, K*K) array, validating equal shapes."""
    if len(objects) == 0:
        raise UsageError("no objects to cluster")
    first = np.asarray(objects[0], dtype=float)
    shape = first.shape
    points = np.empty((len(objects), first.size))
    for i, obj in enumerate(objects):
        arr = np.asarray(obj, dtype=float)
        if arr.shape != shape:
            raise UsageError(f"matrix shape mismatch: {arr.shape} vs {shape}")
        points[i] = arr.ravel()
    return points, shape


def _seed_tuple(seed) -> tuple[int, ...]:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


def _lloyd(points: np.ndarray, init_idx: np.ndarray):
    """One 2-means run from the given starting objects.

    Assignment ties go to the lower cluster index; a cluster that empties is
    reseeded with the object farthest from the surviving centroid. Returns
    (labels, centroids, sse, sse_history).
    """
    centroids = points[init_idx].copy()
    labels = np.full(len(points), -1)
    history = []
    for _ in range(_MAX_LLOYD_ITER):
        d2 = cdist(points, centroids, metric="sqeuclidean")
        new_labels = np.argmin(d2, axis=1)
        for c in range(2):
            if not (new_labels == c).any():
                other = 1 - c
                farthest = int(np.argmax(d2[:, other]))
                new_labels[farthest] = c
        for c in range(2):
            centroids[c] = points[new_labels == c].mean(axis=0)
        d2 = cdist(points, centroids, metric="sqeuclidean")
        history.append(float(d2[np.arange(len(points)), new_labels].sum()))
        if (new_labels == labels).all():
            break
        labels = new_labels
    return labels, centroids, history[-1], history


def _swap_descent(points: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Refine a 2-partition with steepest single-object moves.

    Lloyd stops at allocation fixed points that are not always SSE-minimal;
    moving one object can still pay off once the centroid shift it causes is
    priced in. Repeatedly applies the single move with the largest exact SSE
    decrease (sizes m -> m-1 and s -> s+1 weight the two distances) until no
    move improves, which on small inputs reliably reaches the best
    bipartition. Returns (labels, centroids, sse).
    """
    labels = labels.copy()
    n = len(points)
    for _ in range(_MAX_LLOYD_ITER):
        centroids = np.stack([points[labels == c].mean(axis=0) for c in (0, 1)])
        sizes = np.array([(labels == 0).sum(), n - (labels == 0).sum()])
        d2 = cdist(points, centroids, metric="sqeuclidean")
        own = d2[np.arange(n), labels]
        other = d2[np.arange(n), 1 - labels]
        m = sizes[labels].astype(float)
        s = sizes[1 - labels].astype(float)
        # moves that would empty a cluster are forbidden
        delta = np.full(n, np.inf)
        movable = m > 1
        delta[movable] = (
            s[movable] / (s[movable] + 1.0) * other[movable]
            - m[movable] / (m[movable] - 1.0) * own[movable]
        )
        mover = int(np.argmin(delta))
        if not delta[mover] < -1e-12:
            break
        labels[mover] = 1 - labels[mover]
    centroids = np.stack([points[labels == c].mean(axis=0) for c in (0, 1)])
    d2 = cdist(points, centroids, metric="sqeuclidean")
    sse = float(d2[np.arange(n), labels].sum())
    return labels, centroids, sse


def kmeans_two(
    objects: Sequence[np.ndarray], seed=0, restarts: int = DEFAULT_RESTARTS
) -> tuple[np.ndarray, np.ndarray]:
    """Split objects into two clusters with restarted Lloyd iteration.

    Each restart draws two distinct objects as starting centroids from its
    own seeded stream, runs Lloyd to convergence and then a deterministic
    single-move descent; the partition with the least within-cluster sum of
    squared distances wins (earlier restart on ties). Returns (labels in
    {0, 1}, centroids stacked as (2, ...)).
    """
    points, shape = _as_points(objects)
    n = len(points)
    if n < 2:
        raise UsageError("kmeans_two needs at least 2 objects")
    if restarts < 1:
        raise UsageError("restarts must be at least 1")
    base = _seed_tuple(seed)
    best = None
    for r in range(restarts):
        rng = np.random.default_rng((*base, r))
        init_idx = rng.choice(n, size=2, replace=False)
        labels, _, _, _ = _lloyd(points, init_idx)
        labels, centroids, sse = _swap_descent(points, labels)
        if best is None or sse < best[0]:
            best = (sse, labels, centroids)
    _, labels, centroids = best
    return labels, centroids.reshape((2, *shape))


def within_cluster_sse(
    points: np.ndarray, labels: np.ndarray, centroids: np.ndarray
) -> float:
    """Sum over objects of squared distance to their cluster centroid."""
    diff = points - centroids[labels]
    return float((diff**2).sum())


@dataclass(eq=False)
class ClusterSolution:
    """Result of a bisecting k-means run.

    ``labels`` holds 1-based cluster labels aligned with the input order,
    ``centroids[i]`` / ``sizes[i]`` belong to label ``i + 1``, and
    ``dendrogram`` lists (parent, child_a, child_b) node ids in split order
    with node 0 the root; ``leaf_nodes[i]`` is the node id of label ``i + 1``.
    Silhouettes are None for a single-cluster solution, where they are
    undefined.
    """

    labels: np.ndarray
    centroids: np.ndarray
    sizes: np.ndarray
    dendrogram: tuple[tuple[int, int, int], ...]
    leaf_nodes: tuple[int, ...]
    silhouettes: np.ndarray | None
    mean_silhouette: float | None
    seed: int | tuple[int, ...]
    restarts: int
    n_clusters: int


def bisecting_kmeans(
    objects: Sequence[np.ndarray],
    n_clusters: int,
    seed=0,
    restarts: int = DEFAULT_RESTARTS,
    wind_speeds: Sequence[float] | None = None,
) -> ClusterSolution:
    """Divisive clustering: repeatedly bisect the loosest cluster.

    Each step computes the average internal distance of every current
    cluster and splits the largest one (ties to the oldest cluster) with
    kmeans_two, until ``n_clusters`` clusters exist.
    """
    points, shape = _as_points(objects)
    n = len(points)
    if not 1 <= n_clusters <= n:
        raise UsageError(f"n_clusters must be in [1, {n}], got {n_clusters}")
    if wind_speeds is not None and len(wind_speeds) != n:
        raise UsageError("wind_speeds must match the number of objects")

    clusters: list[tuple[int, np.ndarray]] = [(0, np.arange(n))]
    splits: list[tuple[int, int, int]] = []
    next_id = 1
    for split_i in range(n_clusters - 1):
        best_pos = -1
        best_dist = -1.0
        for pos, (_, idx) in enumerate(clusters):
            if len(idx) < 2:
                continue
            centroid = points[idx].mean(axis=0)
            avg = float(np.sqrt(((points[idx] - centroid) ** 2).sum(axis=1)).mean())
            if avg > best_dist:
                best_dist = avg
                best_pos = pos
        node_id, idx = clusters.pop(best_pos)
        sub_labels, _ = kmeans_two(
            [points[i].reshape(shape) for i in idx],
            seed=(*_seed_tuple(seed), split_i),
            restarts=restarts,
        )
        id_a, id_b = next_id, next_id + 1
        next_id += 2
        splits.append((node_id, id_a, id_b))
        clusters.append((id_a, idx[sub_labels == 0]))
        clusters.append((id_b, idx[sub_labels == 1]))

    if wind_speeds is not None:
        wind = np.asarray(wind_speeds, dtype=float)
        clusters.sort(key=lambda c: (float(wind[c[1]].mean()), c[0]))
    else:
        clusters.sort(key=lambda c: c[0])

    labels = np.empty(n, dtype=int)
    centroids = np.empty((len(clusters), *shape))
    sizes = np.empty(len(clusters), dtype=int)
    for i, (_, idx) in enumerate(clusters):
        labels[idx] = i + 1
        centroids[i] = points[idx].mean(axis=0).reshape(shape)
        sizes[i] = len(idx)

    if n_clusters >= 2:
        sil, mean_sil = silhouette_scores(objects, labels)
    else:
        sil, mean_sil = None, None

    return ClusterSolution(
        labels=labels,
        centroids=centroids,
        sizes=sizes,
        dendrogram=tuple(splits),
        leaf_nodes=tuple(node_id for node_id, _ in clusters),
        silhouettes=sil,
        mean_silhouette=mean_sil,
        seed=seed,
        restarts=restarts,
        n_clusters=n_clusters,
    )


def silhouette_scores(
    objects: Sequence[np.ndarray], labels: Sequence[int]
) -> tuple[np.ndarray, float]:
    """Per-object silhouette coefficients and their mean.

    a = mean distance to co-members (excluding self), b = smallest mean
    distance to one other cluster, s = (b - a) / max(a, b); members of
    singleton clusters score 0.
    """
    points, _ = _as_points(objects)
    labels = np.asarray(labels)
    if len(labels) != len(points):
        raise UsageError("labels must match the number of objects")
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise DataError("silhouettes are undefined for a single cluster")

    dist = cdist(points, points)
    masks = [labels == u for u in uniq]
    sums = np.stack([dist[:, m].sum(axis=1) for m in masks], axis=1)
    counts = np.array([m.sum() for m in masks])
    own = np.searchsorted(uniq, labels)

    n = len(points)
    s = np.zeros(n)
    own_count = counts[own]
    multi = own_count > 1
    a = np.zeros(n)
    a[multi] = sums[np.arange(n), own][multi] / (own_count[multi] - 1)

    mean_other = sums / counts[None, :]
    mean_other[np.arange(n), own] = np.inf
    b = mean_other.min(axis=1)

    denom = np.maximum(a, b)
    valid = multi & (denom > 0)
    s[valid] = (b[valid] - a[valid]) / denom[valid]
    return s, float(s.mean())


@dataclass
class SilhouetteRow:
    n_clusters: int
    minimum: float
    q1: float
    median: float
    mean: float
    q3: float
    maximum: float


def silhouette_table(
    objects: Sequence[np.ndarray],
    n_range: Sequence[int],
    seed=0,
    restarts: int = DEFAULT_RESTARTS,
    wind_speeds: Sequence[float] | None = None,
) -> list[SilhouetteRow]:
    """Descriptive silhouette statistics for a range of cluster counts.

    Quartiles use linear interpolation.
    """
    rows = []
    for n_clusters in n_range:
        if n_clusters < 2:
            raise UsageError("silhouette_table needs cluster counts of at least 2")
        solution = bisecting_kmeans(
            objects, n_clusters, seed=seed, restarts=restarts, wind_speeds=wind_speeds
        )
        s = solution.silhouettes
        rows.append(
            SilhouetteRow(
                n_clusters=n_clusters,
                minimum=float(s.min()),
                q1=float(np.quantile(s, 0.25)),
                median=float(np.quantile(s, 0.5)),
                mean=float(s.mean()),
                q3=float(np.quantile(s, 0.75)),
                maximum=float(s.max()),
            )
        )
    return rows
