"""Reconstruction, auto-encoder and KL losses and the full-batch training loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import AdamState, Tape, Var
from .evaluation import EdgeSplit, evaluate
from .graph import Graph, normalize_adjacency
from .models import DgaeModel, Variant, encode

__all__ = [
    "DegenerateGraphError",
    "EpochRecord",
    "LossConfig",
    "TrainConfig",
    "TrainHistory",
    "TrainingError",
    "label_matrix",
    "loss_kl",
    "loss_l2",
    "loss_reconstruction",
    "loss_reconstruction_literal",
    "train",
]

log = logging.getLogger(__name__)


class DegenerateGraphError(ValueError):
    """Label matrix is all zeros or all ones, so the weighted BCE is undefined."""


class TrainingError(RuntimeError):
    pass


def label_matrix(graph: Graph) -> sp.csr_matrix:
    """Binary ``A + I`` used as reconstruction target."""
    return (graph.adjacency() + sp.identity(graph.n, format="csr")).tocsr()


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _row_blocks(n: int, block_threshold: int):
    rows = n if n <= block_threshold else max(1, block_threshold * block_threshold // n)
    for start in range(0, n, rows):
        yield slice(start, min(n, start + rows))


def loss_reconstruction(z, labels: sp.spmatrix, n: int | None = None, *, block_threshold: int = 5000) -> Var:
    """Weighted binary cross-entropy between ``sigmoid(Z Z^T)`` and ``labels``.

    Sums over all ``n^2`` ordered pairs with positive weight
    ``(n^2 - nnz) / nnz`` and overall factor ``n^2 / (2 (n^2 - nnz))``,
    averaged over ``n^2``. When ``n > block_threshold`` the logits are formed
    a row block at a time so the dense ``n x n`` matrix never exists.
    """
    z = ad.constant(z)
    labels = sp.csr_matrix(labels)
    n = z.shape[0] if n is None else n
    if labels.shape != (n, n) or z.shape[0] != n:
        raise ad.DimensionError(f"labels {labels.shape} vs embedding {z.shape} for n={n}")
    labels.sum_duplicates()
    nnz = int(np.count_nonzero(labels.data))
    total = n * n
    if nnz == 0 or nnz == total:
        raise DegenerateGraphError(f"label matrix has {nnz} ones out of {total}")
    pos_weight = (total - nnz) / nnz
    norm = total / (2.0 * (total - nnz))
    factor = norm / total
    zv = z.value

    blocks = list(_row_blocks(n, block_threshold))
    keep_probs = len(blocks) == 1

    # sum_ij [w y sp(-x) + (1-y) sp(x)] = sum_ij sp(x) + sum_{y=1} [(w-1) sp(x) - w x]
    def block_terms(rows, want_value=True):
        logits = zv[rows] @ zv.T
        e = np.abs(logits)
        np.negative(e, out=e)
        np.exp(e, out=e)
        probs = e + 1.0
        np.reciprocal(probs, out=probs)
        np.multiply(probs, e, out=probs, where=logits < 0)
        y = labels[rows].tocoo()
        value = 0.0
        if want_value:
            x = logits[y.row, y.col]
            np.log1p(e, out=e)
            value = (np.maximum(logits, 0.0, out=logits).sum() + e.sum()
                     + np.sum((pos_weight - 1.0) * _softplus(x) - pos_weight * x))
        return value, probs, (y.row, y.col)

    value = 0.0
    cached = None
    for rows in blocks:
        block_value, probs, idx = block_terms(rows)
        value += block_value
        if keep_probs:
            cached = (probs, idx)

    def backward(g):
        grad = np.zeros_like(zv)
        scale_g = factor * g[0, 0]
        for rows in blocks:
            probs, (r, c) = cached if cached is not None else block_terms(rows, want_value=False)[1:]
            d = scale_g * probs
            d[r, c] += scale_g * (pos_weight * (probs[r, c] - 1.0) - probs[r, c])
            grad[rows] += d @ zv
            grad += d.T @ zv[rows]
        return (grad,)

    return ad.custom_op(np.array([[factor * value]]), (z,), backward)


def loss_reconstruction_literal(z, labels: sp.spmatrix) -> Var:
    """Mean negative log-likelihood over the positive label entries only.

    Kept for ablation: without a negative-pair term it is minimized by
    inflating every score.
    """
    z = ad.constant(z)
    coo = sp.coo_matrix(labels)
    mask = coo.data != 0
    rows, cols = coo.row[mask], coo.col[mask]
    if rows.size == 0:
        raise DegenerateGraphError("label matrix has no positive entries")
    zv = z.value
    logits = np.einsum("ij,ij->i", zv[rows], zv[cols])
    c = 1.0 / rows.size

    def backward(g):
        d = (c * g[0, 0]) * (ad._logistic(logits) - 1.0)
        grad = np.zeros_like(zv)
        np.add.at(grad, rows, d[:, None] * zv[cols])
        np.add.at(grad, cols, d[:, None] * zv[rows])
        return (grad,)

    return ad.custom_op(np.array([[c * np.sum(_softplus(-logits))]]), (z,), backward)


@dataclass
class LossConfig:
    lambda0: float = 1.0
    lambda_ae: list[float] | None = None  # None -> 1.0 for every skip
    kl_weight: float | None = None  # None -> 1 / n^2

    def __post_init__(self):
        weights = [self.lambda0] + list(self.lambda_ae or [])
        if self.kl_weight is not None:
            weights.append(self.kl_weight)
        if any(not math.isfinite(w) or w < 0 for w in weights):
            raise ValueError(f"loss weights must be finite and non-negative: {weights}")

    def ae_weights(self, count: int) -> list[float]:
        if self.lambda_ae is None:
            return [1.0] * count
        if len(self.lambda_ae) != count:
            raise ValueError(f"lambda_ae has {len(self.lambda_ae)} entries for {count} auto-encoders")
        return list(self.lambda_ae)


def loss_l2(ae_outputs, ae_target, recon_loss, cfg: LossConfig) -> Var:
    """``sum_i lambda_i ||recon_i - target||_F^2 + lambda0 * recon_loss``.

    ``ae_target`` is ``X`` for feature skips and ``adj @ X`` for co-embedding;
    ``ae_outputs`` holds ``(latent, reconstruction)`` pairs.
    """
    recon_loss = ad.constant(recon_loss)
    total = ad.scale(ad.constant(cfg.lambda0), recon_loss)
    for lam, (_, recon) in zip(cfg.ae_weights(len(ae_outputs)), ae_outputs):
        if lam:
            total = ad.add(total, ad.scale(ad.constant(lam), ad.frobenius_sq(recon, ae_target)))
    return total


def loss_kl(mu, logvar) -> Var:
    """``-1/2 sum(1 + logvar - mu^2 - exp(logvar))``."""
    mu, logvar = ad.constant(mu), ad.constant(logvar)
    if mu.shape != logvar.shape:
        raise ad.DimensionError(f"mu {mu.shape} vs logvar {logvar.shape}")
    inner = ad.sub(ad.sub(ad.add(np.ones(mu.shape), logvar), ad.mul(mu, mu)), ad.exp(logvar))
    return ad.scale(ad.constant(-0.5), ad.sum_all(inner))


# --------------------------------------------------------------------------
# training loop


@dataclass
class TrainConfig:
    epochs: int = 200
    lr: float = 0.01
    seed: int = 0
    eval_every: int = 10
    selection: str = "final_epoch"
    loss_form: str = "weighted_bce"
    block_threshold: int = 5000

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.eval_every < 1:
            raise ValueError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.selection not in ("final_epoch", "best_validation_auc"):
            raise ValueError(f"unknown selection {self.selection!r}")
        if self.loss_form not in ("weighted_bce", "literal"):
            raise ValueError(f"unknown loss_form {self.loss_form!r}")


@dataclass
class EpochRecord:
    epoch: int
    loss_total: float
    loss_recon: float
    loss_ae: float
    loss_kl: float
    val_auc: float = math.nan
    val_ap: float = math.nan


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    selected_epoch: int | None = None

    COLUMNS = ("epoch", "loss_total", "loss_recon", "loss_ae", "loss_kl", "val_auc", "val_ap")

    def losses(self) -> np.ndarray:
        return np.array([r.loss_total for r in self.records])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.COLUMNS)
            for r in self.records:
                writer.writerow([r.epoch] + [repr(float(getattr(r, c))) for c in self.COLUMNS[1:]])


def ae_target(model: DgaeModel, adj, x: np.ndarray) -> np.ndarray:
    """What the auto-encoders reconstruct: ``X`` for feature skips, else ``adj @ X``."""
    if model.config.variant is Variant.DGAE_FEAT:
        return x
    return np.asarray(adj.matrix @ x)


@dataclass
class LossParts:
    total: Var
    recon: float
    ae: float
    kl: float


def total_loss(model: DgaeModel, adj, x, labels, target, loss_cfg: LossConfig, train_cfg: TrainConfig,
               rng=None, training: bool = True) -> LossParts:
    """Forward pass plus the variant's full objective (L1, L2/L3, + KL)."""
    out = encode(model, adj, x, training=training, rng=rng)
    if train_cfg.loss_form == "literal":
        recon = loss_reconstruction_literal(out.z, labels)
    else:
        recon = loss_reconstruction(out.z, labels, block_threshold=train_cfg.block_threshold)
    total = loss_l2(out.ae_outputs, target, recon, loss_cfg) if out.ae_outputs else ad.scale(
        ad.constant(loss_cfg.lambda0), recon)
    ae_part = total.item() - loss_cfg.lambda0 * recon.item()
    kl_value = 0.0
    if out.mu is not None:
        n = out.mu.shape[0]
        kl_weight = loss_cfg.kl_weight if loss_cfg.kl_weight is not None else 1.0 / (n * n)
        kl = loss_kl(out.mu, out.logvar)
        kl_value = kl.item()
        total = ad.add(total, ad.scale(ad.constant(kl_weight), kl))
    return LossParts(total, recon.item(), ae_part, kl_value)


def train(model: DgaeModel, graph: Graph, split: EdgeSplit, loss_cfg: LossConfig | None = None,
          train_cfg: TrainConfig | None = None) -> tuple[DgaeModel, TrainHistory]:
    """Full-batch Adam training on the training edges of ``split``.

    The adjacency, labels and AE targets are built from ``split.train_edges``
    alone; validation pairs are only scored, never trained on.
    """
    loss_cfg = loss_cfg or LossConfig()
    train_cfg = train_cfg or TrainConfig()
    if len(split.train_edges) == 0:
        raise TrainingError("split has no training edges")
    if split.n != graph.n:
        raise TrainingError(f"split is for n={split.n}, graph has n={graph.n}")
    train_graph = graph.with_edges(split.train_edges)
    adj = normalize_adjacency(train_graph)
    labels = label_matrix(train_graph)
    x = graph.features
    target = ae_target(model, adj, x) if model.aes else None

    rng = np.random.default_rng(train_cfg.seed)
    params = model.parameters()
    state = AdamState(lr=train_cfg.lr)
    history = TrainHistory()
    best = (-math.inf, None, None)

    for epoch in range(train_cfg.epochs):
        ad.zero_grads(params)
        with Tape() as tape:
            parts = total_loss(model, adj, x, labels, target, loss_cfg, train_cfg, rng=rng)
        loss_value = parts.total.item()
        if not math.isfinite(loss_value):
            raise TrainingError(f"non-finite loss {loss_value} at epoch {epoch}")
        ad.backward(parts.total, tape)
        ad.adam_step(state, params)
        rec = EpochRecord(epoch, loss_value, parts.recon, parts.ae, parts.kl)
        last = epoch == train_cfg.epochs - 1
        if len(split.val_pos) and ((epoch + 1) % train_cfg.eval_every == 0 or last):
            z = encode(model, adj, x).embedding
            rec.val_auc, rec.val_ap = evaluate(z, split, "validation")
            if rec.val_auc > best[0]:
                best = (rec.val_auc, epoch, model.snapshot())
        history.records.append(rec)
        if epoch % 50 == 0:
            log.debug("epoch %d loss %.6f", epoch, loss_value)

    history.selected_epoch = train_cfg.epochs - 1
    if train_cfg.selection == "best_validation_auc" and best[2] is not None:
        model.restore(best[2])
        history.selected_epoch = best[1]
    return model, history
