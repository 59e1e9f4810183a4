"""Empirical mutual proximity and mutual remoteness over a pooled sample."""

from __future__ import annotations

import numpy as np

from .metrics import QimParams
from .permtest import DistanceMatrix, TestResult, permutation_test, raw_distances


def _as_square(d) -> np.ndarray:
    if isinstance(d, DistanceMatrix):
        d = d.entries
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"distance matrix must be square, got {d.shape}")
    if d.shape[0] < 3:
        raise ValueError("mutual proximity needs at least 3 points")
    if not np.array_equal(d, d.T):
        raise ValueError("distance matrix must be symmetric")
    return d


def mutual_proximity(d) -> np.ndarray:
    """Share of points farther from both ``i`` and ``j`` than they are from each other.

    ``MP[i, j] = |{k: d[i,k] > d[i,j]} & {k: d[j,k] > d[j,i]}| / S`` with ``k``
    running over all ``S`` points. Pass raw (unsquared) distances; since only
    strict comparisons enter, any strictly increasing transform of ``d`` gives
    the same result.
    """
    d = _as_square(d)
    s = d.shape[0]
    # farther[i, j, k] = d[i, k] > d[i, j]
    farther = d[:, None, :] > d[:, :, None]
    counts = np.count_nonzero(farther & farther.transpose(1, 0, 2), axis=2)
    return counts / s


def mutual_remoteness(mp) -> np.ndarray:
    """``1 - MP`` off the diagonal, zero on it."""
    mp = np.asarray(mp, dtype=float)
    if np.any((mp < 0) | (mp > 1)):
        raise ValueError("mutual proximity entries must lie in [0, 1]")
    mr = 1.0 - mp
    np.fill_diagonal(mr, 0.0)
    return mr


def remoteness_matrix(raw, nA: int, *, squared: bool = True) -> DistanceMatrix:
    """Distance matrix of mutual remoteness values, squared by default."""
    mr = mutual_remoteness(mutual_proximity(raw))
    return DistanceMatrix(mr * mr if squared else mr, nA)


def mr_test(
    samples,
    nA: int,
    metric: QimParams = QimParams(),
    K: int = 1000,
    c: float = 1,
    seed: int = 0,
    *,
    squared: bool = True,
    workers: int = 1,
) -> TestResult:
    """Permutation test on mutual remoteness derived from raw graph distances."""
    raw = raw_distances(list(samples), metric, workers=workers)
    D = remoteness_matrix(raw, nA, squared=squared)
    return permutation_test(D, K, c, seed, workers=workers)
