"""Graph representation, Laplacian spectra and adjacency file I/O."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SYMMETRY_RTOL = 1e-9
DIAGONAL_ATOL = 1e-12


class GraphError(ValueError):
    """Raised for malformed or invalid adjacency input."""


class SpectrumError(RuntimeError):
    """Raised when the symmetric eigensolver fails to converge."""


@dataclass(frozen=True, eq=False)
class AdjacencyMatrix:
    """Dense, symmetric, hollow ``v x v`` edge-weight matrix.

    The stored array is a read-only copy, so instances can be shared freely
    between threads and processes.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, copy=True)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise GraphError(f"adjacency matrix must be square, got shape {w.shape}")
        if w.shape[0] < 1:
            raise GraphError("adjacency matrix needs at least one node")
        if not np.all(np.isfinite(w)):
            raise GraphError("adjacency matrix contains NaN or Inf entries")
        if np.any(np.diag(w) != 0):
            raise GraphError("self-loops are not allowed (nonzero diagonal)")
        if not np.array_equal(w, w.T):
            raise GraphError("adjacency matrix must be exactly symmetric")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def v(self) -> int:
        return self.weights.shape[0]

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.weights, 1)))

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.weights >= 0))

    def __eq__(self, other):
        if not isinstance(other, AdjacencyMatrix):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())

    def __repr__(self):
        return f"AdjacencyMatrix(v={self.v}, edges={self.n_edges})"


@dataclass(frozen=True)
class LaplacianSpectrum:
    """Ascending Laplacian eigenvalues and vibration frequencies (their roots)."""

    eigenvalues: np.ndarray
    frequencies: np.ndarray = field(repr=False)


def from_array(
    a,
    *,
    symmetrize: bool = False,
    drop_diagonal: bool = False,
) -> AdjacencyMatrix:
    """Validate a raw square array and wrap it as an :class:`AdjacencyMatrix`.

    Parameters
    ----------
    a : array_like
        Square matrix of edge weights.
    symmetrize : bool
        Average the two triangles instead of rejecting asymmetric input.
    drop_diagonal : bool
        Zero the diagonal unconditionally (e.g. correlation matrices with a
        unit diagonal). Without it, a diagonal is only zeroed when every entry
        is below ``1e-12`` in magnitude.
    """
    w = np.array(a, dtype=float, copy=True)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise GraphError(f"adjacency matrix must be square, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise GraphError("adjacency matrix contains NaN or Inf entries")

    diag = np.diag(w)
    if drop_diagonal or np.all(np.abs(diag) < DIAGONAL_ATOL):
        np.fill_diagonal(w, 0.0)
    else:
        raise GraphError(
            f"nonzero diagonal (max |w_ii| = {np.abs(diag).max():.3g}); "
            "self-loops are not allowed"
        )

    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    asym = float(np.abs(w - w.T).max(initial=0.0))
    if symmetrize:
        w = 0.5 * (w + w.T)
    elif asym > SYMMETRY_RTOL * scale:
        raise GraphError(f"adjacency matrix is not symmetric (max |w_ij - w_ji| = {asym:.3g})")
    else:
        # within tolerance: take the upper triangle as canonical
        w = np.triu(w, 1)
        w = w + w.T
    return AdjacencyMatrix(w)


def _looks_numeric(row) -> bool:
    try:
        [float(x) for x in row if x.strip() != ""]
    except ValueError:
        return False
    return True


def _read_adjacency_csv(text: str, **kwargs) -> AdjacencyMatrix:
    rows = [r for r in csv.reader(io.StringIO(text)) if any(c.strip() for c in r)]
    if not rows:
        raise GraphError("empty adjacency file")
    if not _looks_numeric(rows[0]):
        rows = rows[1:]
    try:
        data = [[float(c) for c in r] for r in rows]
    except ValueError as exc:
        raise GraphError(f"non-numeric adjacency entry: {exc}") from None
    widths = {len(r) for r in data}
    if len(widths) != 1:
        raise GraphError("ragged adjacency rows")
    return from_array(np.array(data), **kwargs)


def _read_edgelist(text: str, nodes: int | None, **kwargs) -> AdjacencyMatrix:
    if nodes is None:
        raise GraphError("edgelist input requires an explicit node count")
    w = np.zeros((nodes, nodes))
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise GraphError(f"line {lineno}: expected 'i j [w]', got {line!r}")
        i, j = int(parts[0]), int(parts[1])
        weight = float(parts[2]) if len(parts) == 3 else 1.0
        if not (0 <= i < nodes and 0 <= j < nodes):
            raise GraphError(f"line {lineno}: node index out of range for v={nodes}")
        if i == j:
            raise GraphError(f"line {lineno}: self-loop on node {i}")
        w[i, j] = w[j, i] = weight
    return from_array(w, **kwargs)


def read_graph(
    path,
    format: str = "adjacency-csv",
    *,
    nodes: int | None = None,
    symmetrize: bool = False,
    drop_diagonal: bool = False,
) -> AdjacencyMatrix:
    """Load a graph from an adjacency CSV or a whitespace edge list.

    Edge lists use 0-based ``i j w`` lines and need ``nodes``; adjacency CSV
    files may carry a non-numeric header row, which is skipped.
    """
    text = Path(path).read_text()
    if format in ("adjacency-csv", "csv"):
        return _read_adjacency_csv(text, symmetrize=symmetrize, drop_diagonal=drop_diagonal)
    if format == "edgelist":
        return _read_edgelist(text, nodes, symmetrize=symmetrize, drop_diagonal=drop_diagonal)
    raise GraphError(f"unknown graph format {format!r}")


def write_graph(path, graph: AdjacencyMatrix) -> None:
    """Write ``graph`` as a headerless adjacency CSV (round-trips exactly)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in graph.weights:
            writer.writerow([repr(float(x)) for x in row])


def vectorize(graph: AdjacencyMatrix) -> np.ndarray:
    """Stack the columns of the weight matrix into a length ``v**2`` vector."""
    return graph.weights.ravel(order="F").copy()


def laplacian(graph: AdjacencyMatrix) -> np.ndarray:
    """Weighted combinatorial Laplacian ``diag(strengths) - W``."""
    w = graph.weights
    return np.diag(w.sum(axis=1)) - w


def spectrum(lap: np.ndarray) -> LaplacianSpectrum:
    """Eigen-decompose a symmetric Laplacian.

    Round-off negatives are clamped to zero before taking square roots, so the
    returned frequencies are real, nonnegative and ascending.
    """
    lap = np.asarray(lap, dtype=float)
    scale = max(1.0, float(np.abs(lap).max(initial=0.0)))
    if np.abs(lap - lap.T).max(initial=0.0) > SYMMETRY_RTOL * scale:
        raise GraphError("Laplacian is not symmetric")
    try:
        eig = np.linalg.eigvalsh(lap)
    except np.linalg.LinAlgError as exc:
        raise SpectrumError(f"eigensolver did not converge: {exc}") from exc
    radius = float(np.abs(eig).max(initial=0.0))
    if eig.size and eig[0] < -1e-8 * (1.0 + radius):
        raise GraphError(
            f"Laplacian is not positive semidefinite (min eigenvalue {eig[0]:.3g}); "
            "negative edge weights?"
        )
    eig = np.clip(eig, 0.0, None)
    return LaplacianSpectrum(eigenvalues=eig, frequencies=np.sqrt(eig))


def graph_spectrum(graph: AdjacencyMatrix) -> LaplacianSpectrum:
    return spectrum(laplacian(graph))


def empty_graph(v: int) -> AdjacencyMatrix:
    return AdjacencyMatrix(np.zeros((v, v)))


def complete_graph(v: int) -> AdjacencyMatrix:
    return AdjacencyMatrix(np.ones((v, v)) - np.eye(v))
