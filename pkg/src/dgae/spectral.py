"""Polynomial-filter expansion of linearized encoders and lazy-walk mixing.

With every activation set to the identity, each encoder in :mod:`dgae.models`
is a sum of graph filters of different orders::

    Z = sum_j  adj^j (X C_j + 1 o_j)

where ``C_j`` are products of layer and auto-encoder weights weighted by the
mixing coefficients and ``o_j`` collects the auto-encoder biases. The
expansion is derived from the model's parameters alone, so comparing it to
the forward pass is an independent check of the recursion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, SparseAdjacency, lazy_walk_matrix
from .models import DgaeModel, ModelConfig, Variant, build, encode

__all__ = [
    "ExpansionReport",
    "PolynomialExpansion",
    "closed_form_two_layer",
    "expand_linear_model",
    "random_linear_model",
    "theory_suite",
    "verify_expansion",
    "walk_collapse",
]


@dataclass
class PolynomialExpansion:
    """``coeffs[j]`` is ``C_j`` (m x h); ``offsets[j]`` is ``o_j`` (1 x h)."""

    coeffs: dict[int, np.ndarray]
    offsets: dict[int, np.ndarray]

    @property
    def orders(self) -> list[int]:
        return sorted(self.coeffs)

    def evaluate(self, adj: SparseAdjacency, x: np.ndarray) -> np.ndarray:
        top = max(list(self.coeffs) + list(self.offsets))
        ax = np.asarray(x, dtype=np.float64)
        ones = np.ones((adj.n, 1))
        z = 0.0
        for j in range(top + 1):
            if j in self.coeffs:
                z = z + ax @ self.coeffs[j]
            if j in self.offsets:
                z = z + ones @ self.offsets[j]
            ax = np.asarray(adj.matrix @ ax)
            ones = np.asarray(adj.matrix @ ones)
        return z


def _effective(model: DgaeModel, index: int, w: np.ndarray, use_identity: bool) -> np.ndarray:
    if not use_identity or w.shape[0] != w.shape[1] or not model.beta_logits:
        return w
    beta = model.betas()[index]
    return (1.0 - beta) * w + beta * np.eye(w.shape[0])


def _shift_multiply(terms: dict, w: np.ndarray) -> dict:
    return {j + 1: c @ w for j, c in terms.items()}


def _combine(a: dict, wa: float, b: dict, wb: float) -> dict:
    out = {j: wa * c for j, c in a.items()}
    for j, c in b.items():
        out[j] = out[j] + wb * c if j in out else wb * c
    return out


def expand_linear_model(model: DgaeModel) -> PolynomialExpansion:
    """Collect ``C_j`` and ``o_j`` by propagating the layer recursion symbolically in ``adj``."""
    cfg = model.config
    if not cfg.linear_mode:
        raise ValueError("expansion is only exact in linear_mode")
    if cfg.variant.variational:
        raise ValueError("variational encoders have no single deterministic expansion")
    use_identity = cfg.variant.identity
    weights = [_effective(model, i, w.value, use_identity) for i, w in enumerate(model.weights)]
    m = model.m

    if not cfg.variant.has_skips:
        coeffs = {0: np.eye(m)}
        for w in weights:
            coeffs = _shift_multiply(coeffs, w)
        return PolynomialExpansion(coeffs, {})

    ae_power = 0 if cfg.variant is Variant.DGAE_FEAT else 1
    alphas = model.alphas()
    coeffs, offsets = {1: weights[0]}, {}
    first = True
    for i, ae in enumerate(model.aes):
        if not first:
            coeffs = _shift_multiply(coeffs, weights[i])
            offsets = _shift_multiply(offsets, weights[i])
        first = False
        a = alphas[i]
        coeffs = _combine(coeffs, a, {ae_power: ae.enc_w.value}, 1.0 - a)
        offsets = _combine(offsets, a, {0: ae.enc_b.value}, 1.0 - a)
    coeffs = _shift_multiply(coeffs, weights[-1])
    offsets = _shift_multiply(offsets, weights[-1])
    return PolynomialExpansion(coeffs, offsets)


def closed_form_two_layer(model: DgaeModel, adj: SparseAdjacency, x: np.ndarray) -> np.ndarray:
    """``a1 adj^2 X W1 W2 + (1 - a1) adj g1(adj X) W2`` for a linear 2-layer model.

    With zero encoder bias ``g1(adj X) = adj X W1^g`` and this is the familiar
    sum of two second-order filters.
    """
    if model.k != 2 or not model.config.variant.has_skips:
        raise ValueError("closed form applies to 2-layer deepened models")
    a1 = model.alphas()[0]
    ae = model.aes[0]
    w1, w2 = model.weights[0].value, model.weights[1].value
    ax = np.asarray(adj.matrix @ x)
    ae_in = x if model.config.variant is Variant.DGAE_FEAT else ax
    g1 = ae_in @ ae.enc_w.value + ae.enc_b.value
    a2x = np.asarray(adj.matrix @ ax)
    return a1 * a2x @ w1 @ w2 + (1.0 - a1) * np.asarray(adj.matrix @ g1) @ w2


@dataclass
class ExpansionReport:
    k: int
    max_abs_err: float
    passed: bool


def verify_expansion(model: DgaeModel, adj: SparseAdjacency, x, tol: float = 1e-10,
                     expansion: PolynomialExpansion | None = None) -> ExpansionReport:
    """Compare the forward pass to the evaluated expansion (max abs error <= tol)."""
    expansion = expansion or expand_linear_model(model)
    z_forward = encode(model, adj, x).z.value
    z_poly = expansion.evaluate(adj, x)
    err = float(np.max(np.abs(z_forward - z_poly)))
    return ExpansionReport(model.k, err, bool(err <= tol))


def random_linear_model(k: int, m: int, rng: np.random.Generator, variant=Variant.DGAE,
                        hidden_dim: int = 8, latent_dim: int = 4, random_biases: bool = True) -> DgaeModel:
    """Linear-mode model with random weights, mixing coefficients and AE biases."""
    cfg = ModelConfig(variant=variant, k=k, hidden_dim=hidden_dim, latent_dim=latent_dim, linear_mode=True)
    model = build(cfg, m, None, rng)
    for a in model.alpha_logits:
        a.value[...] = rng.normal(scale=2.0)
    for b in model.beta_logits:
        b.value[...] = rng.normal(scale=2.0)
    if random_biases:
        for ae in model.aes:
            ae.enc_b.value[...] = rng.normal(size=ae.enc_b.shape)
    return model


def theory_suite(k_values=range(2, 9), n_graphs: int = 10, n: int = 20, edge_prob: float = 0.2,
                 m: int = 6, seed: int = 0, tol: float = 1e-10, variant=Variant.DGAE):
    """Run :func:`verify_expansion` on random graphs; yields ``(k, graph_index, report)``."""
    from .synthetic import erdos_renyi
    from .graph import normalize_adjacency

    rng = np.random.default_rng(seed)
    for gi in range(n_graphs):
        x = rng.normal(size=(n, m))
        graph = erdos_renyi(n, edge_prob, seed=int(rng.integers(2**31)), features=x)
        adj = normalize_adjacency(graph)
        for k in k_values:
            model = random_linear_model(k, m, rng, variant=variant)
            yield k, gi, verify_expansion(model, adj, x, tol)


# --------------------------------------------------------------------------
# lazy random walk


def _max_pairwise_tv(rows: np.ndarray) -> float:
    best = 0.0
    for i in range(rows.shape[0] - 1):
        d = 0.5 * np.abs(rows[i + 1:] - rows[i]).sum(axis=1).max()
        best = max(best, float(d))
    return best


def walk_collapse(graph: Graph, k_max: int) -> list[tuple[int, float]]:
    """Row dispersion of ``(D^-1 (A + I))^k`` for ``k = 1..k_max``.

    Dispersion is the largest total-variation distance between two rows of
    the same connected component, maximized over components. It is
    non-increasing in ``k`` and tends to 0 on every connected component.
    Cost is cubic in the largest component size.
    """
    walk = lazy_walk_matrix(graph).toarray()
    labels = graph.components()
    groups = [np.flatnonzero(labels == c) for c in np.unique(labels)]
    power = np.eye(graph.n)
    out = []
    for k in range(1, k_max + 1):
        power = power @ walk
        disp = max((_max_pairwise_tv(power[np.ix_(idx, idx)]) for idx in groups if idx.size > 1), default=0.0)
        out.append((k, disp))
    return out
