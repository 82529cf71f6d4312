"""Shared helpers for the test suite."""

from __future__ import annotations

from itertools import combinations

import numpy as np

from windstates.ingest import DEFAULT_SIGNALS, EpochMatrix


def make_epoch(
    rows: np.ndarray,
    turbine_id: str = "WT01",
    epoch_start: float = 0.0,
    signals=None,
    epoch_length: int = 180,
    min_points: int = 90,
) -> EpochMatrix:
    """Wrap a K x T' array of retained columns as an EpochMatrix."""
    rows = np.asarray(rows, dtype=float)
    if signals is None:
        signals = tuple(f"S{i + 1}" for i in range(rows.shape[0]))
    return EpochMatrix(
        turbine_id=turbine_id,
        epoch_start=epoch_start,
        signals=tuple(signals),
        rows=rows,
        valid_count=rows.shape[1],
        epoch_length=epoch_length,
        min_points=min_points,
    )


def random_epoch(rng: np.random.Generator, k: int = 5, t: int = 180) -> EpochMatrix:
    """A full-rank random epoch with K channels and T' retained columns."""
    return make_epoch(rng.standard_normal((k, t)), signals=DEFAULT_SIGNALS[:k])


def brute_force_best_sse(points: np.ndarray) -> float:
    """Minimum within-cluster SSE over all bipartitions of the points.

    Enumerates every split into two non-empty groups, scoring each with
    mean centroids and summed squared Euclidean distances.
    """
    n = len(points)
    idx = list(range(n))
    best = np.inf
    # fix point 0 in group a to halve the enumeration
    for size_a in range(1, n):
        for combo in combinations(idx[1:], size_a - 1):
            group_a = np.array([0, *combo])
            mask = np.zeros(n, dtype=bool)
            mask[group_a] = True
            sse = 0.0
            for members in (points[mask], points[~mask]):
                centroid = members.mean(axis=0)
                sse += float(((members - centroid) ** 2).sum())
            best = min(best, sse)
    return best
