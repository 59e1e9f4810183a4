"""Pseudo-F statistic on squared distance matrices and its permutation test.

Within- and between-group sums are accumulated with :func:`math.fsum`, which
is correctly rounded and therefore independent of summation order. As a
result ``F`` depends only on the multiset of within-group entries, ties
between permuted and observed statistics are exact, and every permuted
statistic is bit-for-bit reproducible however the work is split.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .graph import AdjacencyMatrix
from .metrics import QimParams, SpectralBatch, vectorize

PERM_CHUNK = 128


class DistanceMatrixError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Squared pairwise distances; group A occupies the first ``nA`` indices."""

    entries: np.ndarray
    nA: int

    def __post_init__(self):
        d = np.array(self.entries, dtype=float, copy=True)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise DistanceMatrixError(f"distance matrix must be square, got {d.shape}")
        n = d.shape[0]
        if not (2 <= self.nA <= n - 2):
            raise DistanceMatrixError(
                f"each group needs at least 2 members (n={n}, nA={self.nA})"
            )
        if not np.all(np.isfinite(d)):
            raise DistanceMatrixError("distance matrix has non-finite entries")
        if not np.array_equal(d, d.T):
            raise DistanceMatrixError("distance matrix must be symmetric")
        if np.any(np.diag(d) != 0):
            raise DistanceMatrixError("distance matrix must have a zero diagonal")
        if np.any(d < 0):
            raise DistanceMatrixError("distance matrix has negative entries")
        d.setflags(write=False)
        object.__setattr__(self, "entries", d)
        object.__setattr__(self, "nA", int(self.nA))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def nB(self) -> int:
        return self.n - self.nA

    def scaled(self, s: float) -> "DistanceMatrix":
        return DistanceMatrix(self.entries * s, self.nA)


@dataclass(frozen=True)
class TestResult:
    f0: float
    p_value: float
    perm_count: int
    pseudo_count: float
    seed: int
    perm_mean: float
    perm_var: float
    mu_within: float
    mu_between: float
    delta_mu: float

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False, indent=2)


@dataclass(frozen=True)
class MomentEstimates:
    muWithin: float
    muBetween: float
    deltaMu: float
    varWithin: float
    varBetween: float
    deltaVar: float


# -- distance matrices -------------------------------------------------------


def _upper_rows_to_matrix(rows: list[np.ndarray]) -> np.ndarray:
    upper = np.vstack(rows)
    upper = np.triu(upper, 1)
    return upper + upper.T


def _pool_map(func, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(func, items))


class _RowTask:
    """Picklable per-row worker: ``(local, global)`` distance rows for row ``i``."""

    def __init__(self, vecs, batch, params):
        self.vecs = vecs
        self.batch = batch
        self.params = params

    def __call__(self, i):
        n = self.vecs.shape[0]
        local = np.zeros(n)
        if i + 1 < n:
            local[i + 1 :] = np.abs(self.vecs[i + 1 :] - self.vecs[i]).sum(axis=1)
        glob = None
        if self.batch is not None:
            try:
                glob = self.batch.im_row(i, self.params.im_method)
            except Exception as exc:
                raise DistanceMatrixError(f"IM distance failed in row {i}: {exc}") from exc
        return local, glob


def distance_components(graphs, params: QimParams = QimParams(), *, workers: int = 1):
    """Raw local (QED approximation) and global (IM) distance matrices.

    The IM matrix is ``None`` when the metric does not need spectra. Each
    unordered pair is computed once; rows are the scheduling unit.
    """
    graphs = list(graphs)
    _check_graphs(graphs)
    vecs = np.stack([vectorize(g) for g in graphs])
    batch = None
    if params.needs_spectrum:
        batch = SpectralBatch.from_graphs(graphs, params)
    rows = _pool_map(_RowTask(vecs, batch, params), range(len(graphs)), workers)
    d_a = _upper_rows_to_matrix([r[0] for r in rows])
    im = _upper_rows_to_matrix([r[1] for r in rows]) if batch is not None else None
    return d_a, im


def _check_graphs(graphs):
    if not graphs:
        raise DistanceMatrixError("no graphs given")
    sizes = {g.v for g in graphs}
    if len(sizes) != 1:
        raise DistanceMatrixError(f"graphs have mixed node counts: {sorted(sizes)}")


def _euclidean_sq_matrix(graphs) -> np.ndarray:
    _check_graphs(graphs)
    vecs = np.stack([vectorize(g) for g in graphs])
    return squareform(pdist(vecs, "sqeuclidean"))


def raw_distances(graphs, params: QimParams = QimParams(), *, workers: int = 1) -> np.ndarray:
    """Unsquared pairwise distance matrix under ``params``."""
    graphs = list(graphs)
    if params.metric == "euclidean":
        return np.sqrt(_euclidean_sq_matrix(graphs))
    d_a, im = distance_components(graphs, params, workers=workers)
    return params.combine(d_a, im if im is not None else 0.0)


def distance_matrix(
    samples: list[AdjacencyMatrix],
    nA: int,
    metric: QimParams = QimParams(),
    *,
    workers: int = 1,
) -> DistanceMatrix:
    """Squared pairwise distances for the pooled sample (group A first)."""
    samples = list(samples)
    if metric.metric == "euclidean":
        return DistanceMatrix(_euclidean_sq_matrix(samples), nA)
    raw = raw_distances(samples, metric, workers=workers)
    return DistanceMatrix(raw * raw, nA)


def vector_distance_matrix(x, nA: int) -> DistanceMatrix:
    """Squared Euclidean distances between the rows of ``x``."""
    return DistanceMatrix(squareform(pdist(np.asarray(x, dtype=float), "sqeuclidean")), nA)


# -- the statistic -----------------------------------------------------------


def _block_sum(d: np.ndarray, idx) -> float:
    # full symmetric block counts every unordered pair twice; halving is exact
    return math.fsum(d[np.ix_(idx, idx)].ravel()) / 2


def _f_from_sums(total: float, s_a: float, s_b: float, n: int, na: int, nb: int) -> float:
    within = s_a / na + s_b / nb
    numer = total / n - within
    denom = within / (n - 2)
    if denom == 0:
        return math.inf if numer > 0 else 1.0
    return numer / denom


def f_statistic(D: DistanceMatrix) -> float:
    """Pseudo-F: between-group over within-group sums of squared distances.

    When every within-group distance is zero the ratio is undefined; ``inf``
    is returned if any between-group distance is positive, else ``1``.
    """
    d = D.entries
    n, na, nb = D.n, D.nA, D.nB
    total = math.fsum(d.ravel()) / 2
    s_a = _block_sum(d, np.arange(na))
    s_b = _block_sum(d, np.arange(na, n))
    return _f_from_sums(total, s_a, s_b, n, na, nb)


def _validate_perm(perm, n: int) -> np.ndarray:
    perm = np.asarray(perm)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise DistanceMatrixError(f"not a permutation of {n} symbols: {perm!r}")
    return perm.astype(np.intp)


def permute_distance_matrix(D: DistanceMatrix, perm) -> DistanceMatrix:
    """Relabel rows and columns: ``out[i, j] = D[perm[i], perm[j]]``."""
    perm = _validate_perm(perm, D.n)
    return DistanceMatrix(D.entries[np.ix_(perm, perm)], D.nA)


def permuted_f(D: DistanceMatrix, perm) -> float:
    """``f_statistic(permute_distance_matrix(D, perm))`` without building the matrix."""
    d = D.entries
    na = D.nA
    total = math.fsum(d.ravel()) / 2
    return _f_from_sums(
        total, _block_sum(d, perm[:na]), _block_sum(d, perm[na:]), D.n, na, D.nB
    )


def permutation(seed: int, k: int, n: int) -> np.ndarray:
    """The ``k``-th permutation of the stream identified by ``seed``."""
    return np.random.default_rng([int(seed), int(k)]).permutation(n)


class _PermChunk:
    def __init__(self, D: DistanceMatrix, seed: int):
        self.D = D
        self.seed = seed

    def __call__(self, bounds):
        lo, hi = bounds
        d, n, na, nb = self.D.entries, self.D.n, self.D.nA, self.D.nB
        total = math.fsum(d.ravel()) / 2
        out = np.empty(hi - lo)
        for idx, k in enumerate(range(lo, hi)):
            perm = permutation(self.seed, k, n)
            out[idx] = _f_from_sums(
                total, _block_sum(d, perm[:na]), _block_sum(d, perm[na:]), n, na, nb
            )
        return out


def permuted_statistics(D: DistanceMatrix, K: int, seed: int, *, workers: int = 1) -> np.ndarray:
    """``F`` for the first ``K`` permutations of the ``seed`` stream."""
    chunks = [(lo, min(lo + PERM_CHUNK, K)) for lo in range(0, K, PERM_CHUNK)]
    parts = _pool_map(_PermChunk(D, seed), chunks, workers)
    return np.concatenate(parts) if parts else np.empty(0)


def p_value(f0: float, perm_stats, c: float = 1) -> float:
    """Add-``c`` permutation p-value; ties with ``f0`` count as exceedances."""
    perm_stats = np.asarray(perm_stats, dtype=float)
    hits = int(np.count_nonzero(perm_stats >= f0))
    return (c + hits) / (perm_stats.size + c)


def moment_estimates(D: DistanceMatrix) -> MomentEstimates:
    """Means and variances of pooled within-group and between-group entries."""
    d, na, n = D.entries, D.nA, D.n
    iu = np.triu_indices(n, 1)
    vals = d[iu]
    same = (iu[0] < na) == (iu[1] < na)
    within, between = vals[same], vals[~same]

    def var(x):
        return float(np.var(x, ddof=1)) if x.size > 1 else 0.0

    mw, mb = float(within.mean()), float(between.mean())
    vw, vb = var(within), var(between)
    return MomentEstimates(mw, mb, mb - mw, vw, vb, vb - vw)


def _moments(x: np.ndarray) -> tuple[float, float]:
    finite = x[np.isfinite(x)]
    if finite.size == 0:
        return math.nan, math.nan
    var = float(np.var(finite, ddof=1)) if finite.size > 1 else 0.0
    return float(finite.mean()), var


def permutation_test(
    D: DistanceMatrix,
    K: int = 1000,
    c: float = 1,
    seed: int = 0,
    *,
    workers: int = 1,
    permutations=None,
) -> TestResult:
    """Permutation test of equal distributions for the two groups in ``D``.

    ``K`` permutations are drawn with replacement from the symmetric group; the
    ``k``-th is a pure function of ``(seed, k)``. Passing ``permutations``
    evaluates exactly that list instead (used for exhaustive enumeration on
    small samples).
    """
    if c <= 0:
        raise ValueError("pseudo-count must be positive")
    f0 = f_statistic(D)
    if permutations is not None:
        stats = np.array([permuted_f(D, _validate_perm(p, D.n)) for p in permutations])
        K = len(stats)
    else:
        if K < 1:
            raise ValueError("need at least one permutation")
        stats = permuted_statistics(D, K, seed, workers=workers)
    mean, var = _moments(stats)
    mom = moment_estimates(D)
    return TestResult(
        f0=f0,
        p_value=p_value(f0, stats, c),
        perm_count=int(K),
        pseudo_count=c,
        seed=int(seed),
        perm_mean=mean,
        perm_var=var,
        mu_within=mom.muWithin,
        mu_between=mom.muBetween,
        delta_mu=mom.deltaMu,
    )


def all_permutations(n: int):
    """Every permutation of ``n`` symbols (``n!`` of them)."""
    return (np.array(p) for p in itertools.permutations(range(n)))


def randomized_test_exhaustive(D: DistanceMatrix, alpha: float, max_n: int = 8) -> float:
    """Randomised exact test over the full symmetric group.

    Returns ``1``, ``0`` or the tie-splitting probability in between, so that
    its average over all relabelings of ``D`` is exactly ``alpha``. Only small
    samples are allowed since the cost is ``n!``.
    """
    n = D.n
    if n > max_n:
        raise ValueError(f"exhaustive enumeration limited to n <= {max_n}")
    stats = np.sort([permuted_f(D, p) for p in all_permutations(n)])
    total = stats.size
    k = math.ceil(total * (1 - alpha))
    cutoff = stats[k - 1]
    m_plus = int(np.count_nonzero(stats > cutoff))
    m_zero = int(np.count_nonzero(stats == cutoff))
    f0 = f_statistic(D)
    if f0 > cutoff:
        return 1.0
    if f0 < cutoff:
        return 0.0
    return (total * alpha - m_plus) / m_zero
