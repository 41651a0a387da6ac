"""Edge splitting with negative sampling, AUC/AP and multi-run aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .graph import Graph, read_edge_file, write_edge_file
from .models import score_pairs

__all__ = [
    "DEFAULT_RATIOS",
    "EdgeSplit",
    "MetricUndefinedError",
    "NegativeSamplingError",
    "RunAggregate",
    "RunRecord",
    "aggregate",
    "ap",
    "auc",
    "evaluate",
    "split_edges",
]

DEFAULT_RATIOS = (0.85, 0.05, 0.10)

# enumerate candidate pairs below this many, rejection-sample above
_ENUMERATION_LIMIT = 2_000_000


class MetricUndefinedError(ValueError):
    """The metric needs both classes (AUC) or at least one positive (AP)."""


class NegativeSamplingError(ValueError):
    """Not enough non-edges to draw the requested negatives."""


@dataclass(eq=False)
class EdgeSplit:
    """Disjoint train/validation/test positives plus sampled negatives.

    All pair arrays are ``(E, 2)`` int64 with ``u < v``.
    """

    n: int
    train_edges: np.ndarray
    val_pos: np.ndarray
    test_pos: np.ndarray
    val_neg: np.ndarray
    test_neg: np.ndarray
    seed: int | None = None

    def part(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        if name in ("validation", "val"):
            return self.val_pos, self.val_neg
        if name == "test":
            return self.test_pos, self.test_neg
        raise ValueError(f"unknown split part {name!r}")

    _FILES = ("train_edges", "val_pos", "test_pos", "val_neg", "test_neg")

    def save(self, directory) -> None:
        """Write the five pair lists as ``<name>.tsv`` edge files."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name in self._FILES:
            write_edge_file(directory / f"{name}.tsv", getattr(self, name))
        meta = f"n\t{self.n}\nseed\t{'' if self.seed is None else self.seed}\n"
        (directory / "split_meta.tsv").write_text(meta, encoding="utf-8")

    @classmethod
    def load(cls, directory) -> "EdgeSplit":
        directory = Path(directory)
        meta = dict(
            line.split("\t", 1)
            for line in (directory / "split_meta.tsv").read_text(encoding="utf-8").splitlines()
            if line
        )
        arrays = {name: read_edge_file(directory / f"{name}.tsv")[0] for name in cls._FILES}
        seed = int(meta["seed"]) if meta.get("seed") else None
        return cls(n=int(meta["n"]), seed=seed, **arrays)


def _part_size(ratio: float, total: int) -> int:
    return int(math.floor(ratio * total + 1e-9))


def _pair_keys(pairs: np.ndarray, n: int) -> np.ndarray:
    return pairs[:, 0] * n + pairs[:, 1]


def _sample_negatives(graph: Graph, count: int, rng: np.random.Generator) -> np.ndarray:
    n = graph.n
    total_pairs = n * (n - 1) // 2
    available = total_pairs - graph.num_edges
    if count > available:
        raise NegativeSamplingError(f"need {count} negative pairs but only {available} non-edges exist")
    if count == 0:
        return np.empty((0, 2), dtype=np.int64)
    edge_keys = _pair_keys(graph.edges, n)
    if total_pairs <= _ENUMERATION_LIMIT:
        u, v = np.triu_indices(n, k=1)
        keys = u.astype(np.int64) * n + v
        candidates = np.flatnonzero(~np.isin(keys, edge_keys))
        chosen = rng.choice(candidates, size=count, replace=False)
        return np.column_stack([u[chosen], v[chosen]]).astype(np.int64)
    taken = set(edge_keys.tolist())
    out = []
    while len(out) < count:
        batch = rng.integers(0, n, size=(2 * (count - len(out)) + 16, 2))
        for a, b in batch:
            if a == b:
                continue
            u, v = (a, b) if a < b else (b, a)
            key = int(u) * n + int(v)
            if key in taken:
                continue
            taken.add(key)
            out.append((u, v))
            if len(out) == count:
                break
    return np.array(out, dtype=np.int64)


def split_edges(graph: Graph, ratios=DEFAULT_RATIOS, seed: int = 0) -> EdgeSplit:
    """Random train/validation/test partition of the edges plus negatives.

    Validation and test sizes are rounded down, the remainder trains.
    Negatives are distinct non-edges (no self-pairs) shared by no part.
    """
    r_train, r_val, r_test = ratios
    if min(ratios) < 0 or abs(r_train + r_val + r_test - 1.0) > 1e-9:
        raise ValueError(f"ratios must be non-negative and sum to 1, got {ratios}")
    num = graph.num_edges
    if num < 20:
        raise ValueError(f"need at least 20 edges to split, got {num}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(num)
    n_val, n_test = _part_size(r_val, num), _part_size(r_test, num)
    test_idx = np.sort(perm[:n_test])
    val_idx = np.sort(perm[n_test:n_test + n_val])
    train_idx = np.sort(perm[n_test + n_val:])
    negatives = _sample_negatives(graph, n_val + n_test, rng)
    return EdgeSplit(
        n=graph.n,
        train_edges=graph.edges[train_idx],
        val_pos=graph.edges[val_idx],
        test_pos=graph.edges[test_idx],
        val_neg=negatives[n_test:],
        test_neg=negatives[:n_test],
        seed=seed,
    )


# --------------------------------------------------------------------------
# metrics


def _check_metric_input(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} scores for {labels.size} labels")
    if not np.all(np.isin(labels, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    return scores, labels.astype(bool)


def auc(scores, labels) -> float:
    """Area under the ROC curve via the rank-sum statistic (ties count 1/2)."""
    scores, labels = _check_metric_input(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores, method="average")
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def ap(scores, labels) -> float:
    """Mean precision at the rank of each positive, scores sorted descending.

    Ties keep input order (stable sort), so the result is reproducible.
    """
    scores, labels = _check_metric_input(scores, labels)
    if not labels.any():
        raise MetricUndefinedError("AP needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    ranks = np.flatnonzero(hits) + 1
    precision = np.arange(1, ranks.size + 1) / ranks
    return float(precision.mean())


def evaluate(z, split: EdgeSplit, part: str = "test") -> tuple[float, float]:
    """``(auc, ap)`` of inner-product scores on one part of ``split``."""
    pos, neg = split.part(part)
    pairs = np.concatenate([pos, neg])
    scores = score_pairs(z, pairs)
    labels = np.concatenate([np.ones(len(pos), dtype=np.int64), np.zeros(len(neg), dtype=np.int64)])
    return auc(scores, labels), ap(scores, labels)


# --------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class RunRecord:
    seed: int | None
    auc: float
    ap: float


@dataclass
class RunAggregate:
    runs: list[RunRecord]
    auc_mean: float = field(init=False)
    auc_std: float = field(init=False)
    ap_mean: float = field(init=False)
    ap_std: float = field(init=False)

    def __post_init__(self):
        aucs = np.array([r.auc for r in self.runs])
        aps = np.array([r.ap for r in self.runs])
        self.auc_mean, self.ap_mean = float(aucs.mean()), float(aps.mean())
        if len(self.runs) > 1:
            self.auc_std, self.ap_std = float(aucs.std(ddof=1)), float(aps.std(ddof=1))
        else:
            self.auc_std = self.ap_std = 0.0

    @property
    def single_run(self) -> bool:
        """True when std is 0 by convention rather than measured."""
        return len(self.runs) == 1


def aggregate(runs) -> RunAggregate:
    """Mean and sample standard deviation of AUC and AP over runs.

    ``runs`` holds :class:`RunRecord` objects or ``(auc, ap)`` tuples.
    """
    records = [r if isinstance(r, RunRecord) else RunRecord(None, float(r[0]), float(r[1])) for r in runs]
    if not records:
        raise ValueError("aggregate needs at least one run")
    return RunAggregate(records)
