"""Graph ingestion, adjacency construction and symmetric normalization."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

__all__ = [
    "DatasetFormatError",
    "DimensionMismatchError",
    "Graph",
    "SparseAdjacency",
    "canonical_edges",
    "featureless",
    "lazy_walk_matrix",
    "load_dataset",
    "normalize_adjacency",
    "read_edge_file",
    "write_edge_file",
]


class DatasetFormatError(ValueError):
    """Raised when an edge or feature file cannot be parsed."""


class DimensionMismatchError(ValueError):
    """Raised when edge indices and feature rows disagree on the node count."""


def canonical_edges(pairs, n: int | None = None) -> np.ndarray:
    """Symmetrize, drop self-loops and deduplicate an array of node pairs.

    Returns an ``(E, 2)`` int64 array with ``u < v`` in each row, sorted
    lexicographically.
    """
    arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if n is not None and arr.size and (arr.min() < 0 or arr.max() >= n):
        raise DimensionMismatchError(f"edge index outside [0, {n})")
    arr = arr[arr[:, 0] != arr[:, 1]]
    arr = np.sort(arr, axis=1)
    if arr.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    return np.unique(arr, axis=0)


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph with a dense node-feature matrix.

    ``edges`` stores every undirected pair once as ``(u, v)`` with ``u < v``.
    ``raw_edge_lines`` is the number of edge records read from disk before
    symmetrization and deduplication (equal to ``len(edges)`` for graphs
    built in memory).
    """

    n: int
    edges: np.ndarray
    features: np.ndarray
    raw_edge_lines: int = field(default=-1, compare=False)

    def __post_init__(self):
        edges = canonical_edges(self.edges, self.n)
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != self.n:
            raise DimensionMismatchError(
                f"features must have {self.n} rows, got shape {features.shape}"
            )
        if not np.all(np.isfinite(features)):
            raise DatasetFormatError("features contain non-finite values")
        edges.setflags(write=False)
        features.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "features", features)
        if self.raw_edge_lines < 0:
            object.__setattr__(self, "raw_edge_lines", len(edges))

    @property
    def m(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @classmethod
    def from_edges(cls, n: int, edges, features=None) -> "Graph":
        if features is None:
            features = np.eye(n)
        return cls(n=n, edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2), features=features)

    def with_edges(self, edges) -> "Graph":
        """Same nodes and features, different edge set (e.g. training edges)."""
        return replace(self, edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2), raw_edge_lines=-1)

    def adjacency(self) -> sp.csr_matrix:
        """Binary symmetric adjacency ``A`` without self-loops."""
        u, v = self.edges[:, 0], self.edges[:, 1]
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        data = np.ones(len(rows))
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.edges[:, 0], 1)
        np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def components(self) -> np.ndarray:
        """Connected-component label per node."""
        _, labels = connected_components(self.adjacency(), directed=False)
        return labels


@dataclass(frozen=True, eq=False)
class SparseAdjacency:
    """Symmetric sparse matrix in CSR form, treated as a constant by autodiff."""

    matrix: sp.csr_matrix

    def __post_init__(self):
        mat = sp.csr_matrix(self.matrix, dtype=np.float64)
        mat.sort_indices()
        if mat.shape[0] != mat.shape[1]:
            raise DimensionMismatchError(f"adjacency must be square, got {mat.shape}")
        object.__setattr__(self, "matrix", mat)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def is_symmetric(self, atol: float = 0.0) -> bool:
        diff = self.matrix - self.matrix.T
        return diff.nnz == 0 or float(abs(diff).max()) <= atol

    @classmethod
    def identity(cls, n: int) -> "SparseAdjacency":
        return cls(sp.identity(n, format="csr", dtype=np.float64))


def normalize_adjacency(graph: Graph) -> SparseAdjacency:
    """Return ``D^-1/2 (A + I) D^-1/2`` with ``D_ii = 1 + degree(i)``."""
    a_hat = graph.adjacency() + sp.identity(graph.n, format="csr")
    d_inv_sqrt = 1.0 / np.sqrt(np.asarray(a_hat.sum(axis=1)).ravel())
    scale = sp.diags(d_inv_sqrt)
    return SparseAdjacency((scale @ a_hat @ scale).tocsr())


def lazy_walk_matrix(graph: Graph) -> sp.csr_matrix:
    """Row-stochastic ``D^-1 (A + I)`` of the lazy random walk."""
    a_hat = graph.adjacency() + sp.identity(graph.n, format="csr")
    d_inv = 1.0 / np.asarray(a_hat.sum(axis=1)).ravel()
    return (sp.diags(d_inv) @ a_hat).tocsr()


def featureless(graph: Graph) -> Graph:
    """Copy of ``graph`` whose features are the ``n x n`` identity."""
    return replace(graph, features=np.eye(graph.n))


def read_edge_file(path) -> tuple[np.ndarray, int]:
    """Parse a ``src<TAB>dst`` edge file.

    Returns the raw ``(L, 2)`` pair array (no dedup) and the number of
    edge lines. Blank lines and lines starting with ``#`` are skipped.
    """
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DatasetFormatError(f"{path}:{lineno}: expected 'src<TAB>dst', got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise DatasetFormatError(f"{path}:{lineno}: non-integer node index in {line!r}") from None
            if u < 0 or v < 0:
                raise DatasetFormatError(f"{path}:{lineno}: negative node index")
            pairs.append((u, v))
    arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return arr, len(pairs)


def write_edge_file(path, pairs) -> None:
    arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, v in arr:
            fh.write(f"{u}\t{v}\n")


def _read_feature_file(path) -> np.ndarray:
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            try:
                row = [float(tok) for tok in line.split("\t")]
            except ValueError:
                raise DatasetFormatError(f"{path}:{lineno}: non-numeric feature value") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DatasetFormatError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
            rows.append(row)
    if not rows:
        raise DatasetFormatError(f"{path}: feature file is empty")
    return np.array(rows, dtype=np.float64)


def load_dataset(edge_path, feature_path=None, n_nodes: int | None = None) -> Graph:
    """Load a graph from an edge TSV and an optional feature TSV.

    With a feature file the node count is its row count and every edge index
    must be smaller. Without one the graph is featureless (``X = I``) and the
    node count is ``n_nodes`` or, if omitted, the largest index plus one.
    """
    raw, n_lines = read_edge_file(edge_path)
    max_index = int(raw.max()) + 1 if raw.size else 0
    if feature_path is not None:
        features = _read_feature_file(feature_path)
        n = features.shape[0]
        if n_nodes is not None and n_nodes != n:
            raise DimensionMismatchError(f"n_nodes={n_nodes} but feature file has {n} rows")
        if max_index > n:
            raise DimensionMismatchError(
                f"{Path(edge_path).name} references node {max_index - 1} but "
                f"{Path(feature_path).name} has only {n} rows"
            )
    else:
        n = max_index if n_nodes is None else n_nodes
        if max_index > n:
            raise DimensionMismatchError(f"edge index {max_index - 1} >= n_nodes={n}")
        features = np.eye(n)
    return Graph(n=n, edges=raw, features=features, raw_edge_lines=n_lines)
