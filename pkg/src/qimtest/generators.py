"""Seeded random graph generators used by the simulation scenarios.

Every generator takes ``seed`` as either an integer or a
:class:`numpy.random.Generator`; equal integer seeds give identical graphs.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from functools import lru_cache

import numpy as np
from scipy.linalg import toeplitz

from .graph import AdjacencyMatrix, complete_graph

FAMILIES = ("er", "bipartite", "ba", "weighted-er", "weighted-bipartite", "mvn-full")
CORRELATIONS = ("identity", "toeplitz-bartlett")


class GeneratorError(ValueError):
    pass


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _from_upper(v: int, mask: np.ndarray, values=1.0) -> AdjacencyMatrix:
    w = np.zeros((v, v))
    iu = np.triu_indices(v, 1)
    w[iu] = np.where(mask, values, 0.0)
    return AdjacencyMatrix(w + w.T)


def erdos_renyi(v: int, p: float, seed=None) -> AdjacencyMatrix:
    """Each of the ``v(v-1)/2`` pairs is an edge independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise GeneratorError(f"edge probability must be in [0, 1], got {p}")
    rng = _rng(seed)
    m = v * (v - 1) // 2
    return _from_upper(v, rng.random(m) < p)


def _parts(v: int) -> tuple[int, int]:
    return v // 2, v - v // 2


def matched_bipartite_p(v: int, p: float) -> float:
    """Cross-part probability giving the same expected edge count as ``ER(v, p)``."""
    a, b = _parts(v)
    if a == 0:
        raise GeneratorError("bipartite graphs need at least 2 nodes")
    p_prime = p * (v * (v - 1) / 2) / (a * b)
    if p_prime > 1.0:
        raise GeneratorError(
            f"density {p} is not reachable by a bipartite graph on {v} nodes "
            f"(needs cross probability {p_prime:.3f} > 1)"
        )
    return p_prime


def bipartite(v: int, p_prime: float, seed=None) -> AdjacencyMatrix:
    """Random bipartite graph between the first ``v // 2`` nodes and the rest."""
    if not 0.0 <= p_prime <= 1.0:
        raise GeneratorError(f"edge probability must be in [0, 1], got {p_prime}")
    rng = _rng(seed)
    a, b = _parts(v)
    w = np.zeros((v, v))
    w[:a, a:] = rng.random((a, b)) < p_prime
    return AdjacencyMatrix(w + w.T)


def barabasi_albert(v: int, m: int, seed=None) -> AdjacencyMatrix:
    """Preferential attachment graph with ``m`` edges per arriving node.

    Starts from ``m`` isolated nodes and a first arrival wired to all of them;
    later arrivals pick ``m`` distinct targets with probability proportional
    to degree. The result is connected with ``m * (v - m)`` edges.
    """
    if not 1 <= m < v:
        raise GeneratorError(f"need 1 <= m < v, got m={m}, v={v}")
    rng = _rng(seed)
    w = np.zeros((v, v))
    deg = np.zeros(v)
    w[m, :m] = w[:m, m] = 1.0
    deg[:m] = 1.0
    deg[m] = m
    for node in range(m + 1, v):
        targets = rng.choice(node, size=m, replace=False, p=deg[:node] / deg[:node].sum())
        w[node, targets] = w[targets, node] = 1.0
        deg[targets] += 1
        deg[node] = m
    return AdjacencyMatrix(w)


def ba_matched_p(v: int, m: int) -> float:
    """ER edge probability whose expected edge count equals a BA(v, m) graph's."""
    return m * (v - m) / (v * (v - 1) / 2)


def toeplitz_bartlett(dim: int) -> np.ndarray:
    """Correlation matrix with entries ``1 - |i - j| / dim``."""
    if dim < 1:
        raise GeneratorError("dimension must be at least 1")
    return toeplitz(1.0 - np.arange(dim) / dim)


@lru_cache(maxsize=32)
def _toeplitz_root(dim: int) -> np.ndarray:
    vals, vecs = np.linalg.eigh(toeplitz_bartlett(dim))
    if vals.min() < -1e-8:
        raise GeneratorError(f"correlation matrix is not PSD (min eigenvalue {vals.min():.3g})")
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    root.setflags(write=False)
    return root


def mvn_weights(
    topology: AdjacencyMatrix,
    mu: float,
    sigma2: float,
    corr: str = "identity",
    seed=None,
) -> AdjacencyMatrix:
    """Put multivariate normal weights on the edges of ``topology``.

    Edges are ordered row-major over the upper triangle; the weight vector is
    ``mu + sigma * R z`` with ``R`` the symmetric square root of the
    correlation matrix. A draw with an exactly zero weight (which would delete
    an edge) is redrawn.
    """
    if sigma2 < 0:
        raise GeneratorError("variance must be nonnegative")
    if corr not in CORRELATIONS:
        raise GeneratorError(f"unknown correlation {corr!r}")
    rng = _rng(seed)
    v = topology.v
    iu = np.triu_indices(v, 1)
    present = topology.weights[iu] != 0
    n_edges = int(present.sum())
    sigma = np.sqrt(sigma2)
    while True:
        z = rng.standard_normal(n_edges)
        if corr == "toeplitz-bartlett" and n_edges:
            z = _toeplitz_root(n_edges) @ z
        weights = mu + sigma * z
        if not np.any(weights == 0):
            break
    values = np.zeros(iu[0].size)
    values[present] = weights
    return _from_upper(v, present, values)


@dataclass(frozen=True)
class GeneratorSpec:
    """Declarative description of one graph distribution.

    ``p`` is the expected edge density for ``er``/``bipartite`` families (the
    bipartite cross probability is derived from it) and ``m`` the attachment
    count for ``ba``.
    """

    family: str = "er"
    v: int = 20
    p: float = 0.1
    m: int = 1
    mu: float = 4.0
    sigma2: float = 0.25
    corr: str = "identity"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise GeneratorError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.corr not in CORRELATIONS:
            raise GeneratorError(f"unknown correlation {self.corr!r}")
        if not 0.0 <= self.p <= 1.0:
            raise GeneratorError(f"p must be in [0, 1], got {self.p}")
        if self.family == "ba" and not 1 <= self.m <= self.v - 1:
            raise GeneratorError(f"m must be in [1, v-1], got {self.m}")
        if self.sigma2 < 0:
            raise GeneratorError("sigma2 must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorSpec":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise GeneratorError(f"unknown generator fields: {sorted(extra)}")
        return cls(**data)

    def sample(self, seed=None) -> AdjacencyMatrix:
        rng = _rng(seed)
        fam = self.family
        if fam == "er":
            return erdos_renyi(self.v, self.p, rng)
        if fam == "bipartite":
            return bipartite(self.v, matched_bipartite_p(self.v, self.p), rng)
        if fam == "ba":
            return barabasi_albert(self.v, self.m, rng)
        if fam == "weighted-er":
            topo = erdos_renyi(self.v, self.p, rng)
        elif fam == "weighted-bipartite":
            topo = bipartite(self.v, matched_bipartite_p(self.v, self.p), rng)
        else:
            topo = complete_graph(self.v)
        return mvn_weights(topo, self.mu, self.sigma2, self.corr, rng)


def generate(spec: GeneratorSpec, seed=None) -> AdjacencyMatrix:
    return spec.sample(seed)
