"""Network distances: QED approximation, Ipsen-Mikhailov and QIM.

Spectral densities are sums of Lorentzians centred on the nonzero-index
Laplacian frequencies. Two evaluation routes exist for the IM integral:

``"analytic"``
    closed-form half-line overlap of two Lorentzians (default, fast);
``"quad"``
    adaptive quadrature after the substitution ``psi = tan(theta)``.

Both routes share the closed-form normalisation constant.
"""

from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .graph import AdjacencyMatrix, GraphError, graph_spectrum, vectorize

METRICS = ("qed", "im", "qim", "qim-plus", "euclidean")
VARIANTS = ("product", "plus")

GAMMA_BRACKET = (1e-4, 10.0)
GAMMA_RESIDUAL = 1e-8
QUAD_TOL = 1e-9
# relative floor: at tiny widths the integral is O(1/gamma) and an absolute
# tolerance alone would ask for more digits than a double holds
QUAD_RTOL = 1e-12

# below this analytic IM^2 the expanded form loses too many digits to cancellation
_CANCELLATION_FLOOR = 1e-10


class MetricError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectralContext:
    """Lorentzian-smoothed spectral density of one graph."""

    frequencies: np.ndarray
    gamma: float
    normK: float

    @classmethod
    def from_frequencies(cls, frequencies, gamma: float) -> "SpectralContext":
        """``frequencies`` are the full ascending list; the first is dropped."""
        if gamma <= 0:
            raise MetricError(f"Lorentzian width must be positive, got {gamma}")
        psi = np.asarray(frequencies, dtype=float)[1:]
        if psi.size == 0:
            raise MetricError("spectral density needs at least two nodes")
        total = np.sum(np.pi / 2 + np.arctan(psi / gamma))
        return cls(frequencies=psi, gamma=float(gamma), normK=float(1.0 / total))

    @classmethod
    def from_graph(cls, graph: AdjacencyMatrix, gamma: float, *, abs_weights=False):
        return cls.from_frequencies(_frequencies(graph, abs_weights), gamma)


def _frequencies(graph: AdjacencyMatrix, abs_weights: bool = False) -> np.ndarray:
    if not graph.is_nonnegative():
        if not abs_weights:
            raise GraphError(
                "spectral distances need nonnegative edge weights; "
                "pass abs_weights=True to use |w|"
            )
        graph = AdjacencyMatrix(np.abs(graph.weights))
    return graph_spectrum(graph).frequencies


def lorentz_density(psi, ctx: SpectralContext):
    """Evaluate the normalised density at ``psi`` (scalar or array)."""
    psi = np.asarray(psi, dtype=float)
    g = ctx.gamma
    terms = g / ((psi[..., None] - ctx.frequencies) ** 2 + g * g)
    return ctx.normK * terms.sum(axis=-1)


def _cauchy_same(z1, z2):
    # int_0^inf dx / ((x - z1)(x - z2)) with z1, z2 in the same half plane;
    # log1p form stays accurate as z2 -> z1
    w = -z1
    u = (z1 - z2) / w
    small = np.abs(u) < 1e-4
    us = np.where(small, 1.0, u)
    series = 1 - u / 2 + u**2 / 3 - u**3 / 4 + u**4 / 5
    return np.where(small, series, np.log1p(us) / us) / w


def _cauchy_conj(z1, z2):
    # same integral with z1 upper and z2 lower half plane; |z1 - z2| >= 2*gamma
    return (np.log(-z2) - np.log(-z1)) / (z1 - z2)


def lorentz_overlap(a, b, gamma: float) -> np.ndarray:
    """Matrix of ``int_0^inf L(x; a_i) L(x; b_j) dx`` for unit-height Lorentzians.

    ``L(x; c) = gamma / ((x - c)^2 + gamma^2)`` is written as the imaginary part
    of ``1 / (x - c - i*gamma)``; the product of imaginary parts reduces to two
    rational integrals with elementary antiderivatives.
    """
    za = np.asarray(a, dtype=float)[..., :, None] + 1j * gamma
    zb = np.asarray(b, dtype=float)[..., None, :] + 1j * gamma
    return 0.5 * (_cauchy_conj(za, np.conj(zb)).real - _cauchy_same(za, zb).real)


def _self_energy(ctx: SpectralContext) -> float:
    return ctx.normK**2 * float(lorentz_overlap(ctx.frequencies, ctx.frequencies, ctx.gamma).sum())


def _im_sq_quad(c1: SpectralContext, c2: SpectralContext, tol: float) -> float:
    # break at every peak and one and ten widths either side of it, so narrow
    # peaks are not missed by the adaptive subdivision
    centres = np.unique(np.concatenate([c1.frequencies, c2.frequencies]))
    offsets = c1.gamma * np.array([-10.0, -1.0, 0.0, 1.0, 10.0])
    knots = np.unique(np.arctan(centres[:, None] + offsets).ravel())
    knots = [float(k) for k in knots if 0.0 < k < np.pi / 2]

    def integrand(theta):
        psi = np.tan(theta)
        diff = lorentz_density(psi, c1) - lorentz_density(psi, c2)
        return float(diff * diff) / np.cos(theta) ** 2

    with np.errstate(over="ignore"), warnings.catch_warnings():
        # convergence is judged below from the returned error estimate
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(
            integrand,
            0.0,
            np.pi / 2,
            points=knots or None,
            epsabs=tol,
            epsrel=QUAD_RTOL,
            limit=max(200, 4 * len(knots) + 50),
            full_output=False,
        )
    if not np.isfinite(val) or err > 10 * max(tol, QUAD_RTOL * abs(val)):
        raise QuadratureError(f"IM quadrature did not converge (estimate {val}, error {err})")
    return max(float(val), 0.0)


def _im_sq_analytic(c1: SpectralContext, c2: SpectralContext) -> float:
    cross = float(lorentz_overlap(c1.frequencies, c2.frequencies, c1.gamma).sum())
    return _self_energy(c1) + _self_energy(c2) - 2 * c1.normK * c2.normK * cross


def im_raw(freq1, freq2, gamma: float, *, method="analytic", tol=QUAD_TOL) -> float:
    """Unclamped L2 distance between two spectral densities of width ``gamma``.

    ``freq1`` and ``freq2`` are full ascending frequency lists (first entry is
    dropped).
    """
    c1 = SpectralContext.from_frequencies(freq1, gamma)
    c2 = SpectralContext.from_frequencies(freq2, gamma)
    if c1.frequencies.shape == c2.frequencies.shape and np.array_equal(
        c1.frequencies, c2.frequencies
    ):
        return 0.0
    if method == "analytic":
        sq = _im_sq_analytic(c1, c2)
        if sq < _CANCELLATION_FLOOR:
            sq = _im_sq_quad(c1, c2, tol=1e-14)
    elif method == "quad":
        sq = _im_sq_quad(c1, c2, tol)
    else:
        raise MetricError(f"unknown IM method {method!r}")
    return float(np.sqrt(max(sq, 0.0)))


def _empty_full_frequencies(n: int):
    empty = np.zeros(n)
    full = np.full(n, np.sqrt(n))
    full[0] = 0.0
    return empty, full


def _solve_gamma_star(n: int, method: str, tol: float) -> float:
    empty, full = _empty_full_frequencies(n)

    def g(gamma):
        return im_raw(empty, full, gamma, method=method, tol=tol) - 1.0

    lo, hi = GAMMA_BRACKET
    glo, ghi = g(lo), g(hi)
    if not (glo > 0 > ghi):
        raise MetricError(
            f"gamma* not bracketed for n={n}: g({lo})={glo:+.3g}, g({hi})={ghi:+.3g}"
        )
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if abs(gm) < GAMMA_RESIDUAL or hi - lo < 1e-15 * mid:
            break
        if gm > 0:
            lo = mid
        else:
            hi = mid
    return mid


_gamma_cache: dict[tuple, float] = {}
_gamma_lock = threading.Lock()


def gamma_star(n: int, *, method: str = "analytic", tol: float = QUAD_TOL) -> float:
    """Width at which the empty and complete ``n``-node graphs are at IM distance 1.

    Solved by bisection on ``[1e-4, 10]`` and cached per ``(n, method, tol)``.
    """
    if n < 2:
        raise MetricError("gamma* needs n >= 2")
    key = (int(n), method, float(tol) if method == "quad" else None)
    with _gamma_lock:
        if key not in _gamma_cache:
            _gamma_cache[key] = _solve_gamma_star(int(n), method, tol)
        return _gamma_cache[key]


def _check_same_size(g1: AdjacencyMatrix, g2: AdjacencyMatrix):
    if g1.v != g2.v:
        raise MetricError(f"node counts differ: {g1.v} vs {g2.v}")


def im_distance(
    g1: AdjacencyMatrix,
    g2: AdjacencyMatrix,
    gamma: float | None = None,
    *,
    method: str = "analytic",
    tol: float = QUAD_TOL,
    abs_weights: bool = False,
) -> float:
    """Normalised Ipsen-Mikhailov distance; ``gamma`` defaults to ``gamma_star(v)``."""
    _check_same_size(g1, g2)
    if gamma is None:
        gamma = gamma_star(g1.v)
    d = im_raw(
        _frequencies(g1, abs_weights),
        _frequencies(g2, abs_weights),
        gamma,
        method=method,
        tol=tol,
    )
    if 1.0 < d < 1.0 + 1e-6:
        d = 1.0
    return d


def qed_approx(g1: AdjacencyMatrix, g2: AdjacencyMatrix) -> float:
    """L1 norm of the difference of the column-stacked weight matrices.

    Every undirected edge appears twice in the stacked vector, so a single
    edge differing by ``t`` contributes ``2 t``.
    """
    _check_same_size(g1, g2)
    return float(np.abs(vectorize(g1) - vectorize(g2)).sum())


def euclidean_sq(x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise MetricError(f"length mismatch: {x.size} vs {y.size}")
    diff = x - y
    return float(diff @ diff)


@dataclass(frozen=True)
class QimParams:
    """Which distance to use and how to weigh its global part.

    ``metric="qim"`` with ``variant="plus"`` is the same as ``metric="qim-plus"``.
    """

    metric: str = "qim"
    kappa: float = 1.0
    variant: str = "product"
    abs_weights: bool = False
    im_method: str = "analytic"

    def __post_init__(self):
        if self.metric not in METRICS:
            raise MetricError(f"unknown metric {self.metric!r}; choose from {METRICS}")
        if self.variant not in VARIANTS:
            raise MetricError(f"unknown variant {self.variant!r}")
        if not self.kappa >= 0:
            raise MetricError(f"kappa must be nonnegative, got {self.kappa}")
        if self.metric == "qim-plus":
            object.__setattr__(self, "metric", "qim")
            object.__setattr__(self, "variant", "plus")

    @property
    def needs_spectrum(self) -> bool:
        return self.metric == "im" or (self.metric == "qim" and self.kappa != 0)

    def gamma_star(self, n: int) -> float:
        return gamma_star(n, method=self.im_method)

    def combine(self, d_a, im):
        """Merge local (``d_a``) and global (``im``) parts; works on arrays."""
        if self.metric == "qed":
            return d_a
        if self.metric == "im":
            return im
        if self.kappa == 0:
            return d_a
        if self.variant == "product":
            return d_a * (1.0 + self.kappa * im)
        return d_a + self.kappa * im


def qim(g1: AdjacencyMatrix, g2: AdjacencyMatrix, params: QimParams = QimParams()) -> float:
    """Distance between two graphs under ``params`` (not squared)."""
    _check_same_size(g1, g2)
    if params.metric == "euclidean":
        return float(np.sqrt(euclidean_sq(vectorize(g1), vectorize(g2))))
    d_a = qed_approx(g1, g2) if params.metric != "im" else 0.0
    im = 0.0
    if params.needs_spectrum:
        im = im_distance(
            g1,
            g2,
            params.gamma_star(g1.v),
            method=params.im_method,
            abs_weights=params.abs_weights,
        )
    return float(params.combine(d_a, im))


@dataclass(frozen=True)
class SpectralBatch:
    """Spectral contexts for a whole sample, with per-graph self energies."""

    contexts: tuple
    frequencies: np.ndarray
    energies: np.ndarray

    @classmethod
    def from_graphs(cls, graphs, params: QimParams) -> "SpectralBatch":
        gamma = params.gamma_star(graphs[0].v)
        ctxs = []
        for idx, g in enumerate(graphs):
            try:
                ctxs.append(SpectralContext.from_graph(g, gamma, abs_weights=params.abs_weights))
            except (GraphError, MetricError) as exc:
                raise type(exc)(f"graph {idx}: {exc}") from exc
        ctxs = tuple(ctxs)
        freqs = np.stack([c.frequencies for c in ctxs])
        energies = np.array([_self_energy(c) for c in ctxs])
        return cls(contexts=ctxs, frequencies=freqs, energies=energies)

    def im_row(self, i: int, method: str = "analytic") -> np.ndarray:
        """IM distances from graph ``i`` to every graph ``j > i`` (zeros elsewhere).

        The unit of work is one fixed row, so the values do not depend on how
        rows are scheduled across workers.
        """
        ctxs = self.contexts
        n = len(ctxs)
        out = np.zeros(n)
        if i + 1 >= n:
            return out
        ci = ctxs[i]
        if method == "analytic":
            cross = lorentz_overlap(
                self.frequencies[i], self.frequencies[i + 1 :], ci.gamma
            ).sum(axis=(-2, -1))
        for off, j in enumerate(range(i + 1, n)):
            cj = ctxs[j]
            if np.array_equal(ci.frequencies, cj.frequencies):
                continue
            if method == "analytic":
                sq = self.energies[i] + self.energies[j] - 2 * ci.normK * cj.normK * cross[off]
                if sq < _CANCELLATION_FLOOR:
                    sq = _im_sq_quad(ci, cj, tol=1e-14)
            elif method == "quad":
                sq = _im_sq_quad(ci, cj, QUAD_TOL)
            else:
                raise MetricError(f"unknown IM method {method!r}")
            out[j] = np.sqrt(max(sq, 0.0))
        out[(out > 1.0) & (out < 1.0 + 1e-6)] = 1.0
        return out
