"""GAE, deepened GAE (feature-skip, co-embedding, identity-regularized) and variational encoders.

All encoders share one layout: ``k`` graph-convolution weights ``W_1..W_k``
(``m x hidden``, ``hidden x hidden`` ..., ``hidden x latent``), and for the
deepened variants ``k - 1`` one-layer auto-encoders whose latent codes are
mixed into each hidden layer through trainable coefficients
``alpha_i = logistic(a_i)``. The identity-regularized variants replace every
square weight by ``(1 - beta_i) W_i + beta_i I`` with ``beta_i = logistic(b_i)``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Var
from .graph import SparseAdjacency

__all__ = [
    "AutoEncoder",
    "ConfigError",
    "DgaeModel",
    "EncoderOutput",
    "ModelConfig",
    "Variant",
    "ae_forward",
    "build",
    "decode",
    "encode",
    "forward_dgae",
    "forward_dgae_identity",
    "forward_gae",
    "forward_variational",
    "load_checkpoint",
    "save_checkpoint",
    "score_pairs",
]

INITIAL_ALPHA = 0.5
INITIAL_BETA = 0.1


class ConfigError(ValueError):
    """Inconsistent model configuration."""


class Variant(str, Enum):
    GAE = "GAE"
    DGAE_FEAT = "DGAE_FEAT"
    DGAE = "DGAE"
    DGAE_ID = "DGAE_ID"
    VGAE = "VGAE"
    DVGA_ID = "DVGA_ID"

    @property
    def has_skips(self) -> bool:
        return self in (Variant.DGAE_FEAT, Variant.DGAE, Variant.DGAE_ID, Variant.DVGA_ID)

    @property
    def identity(self) -> bool:
        return self in (Variant.DGAE_ID, Variant.DVGA_ID)

    @property
    def variational(self) -> bool:
        return self in (Variant.VGAE, Variant.DVGA_ID)


@dataclass
class ModelConfig:
    variant: Variant = Variant.GAE
    k: int = 2
    hidden_dim: int = 32
    latent_dim: int = 16
    linear_mode: bool = False
    dropout_rate: float = 0.0
    ae_encoder_activation: str = "relu"
    ae_bias: bool = True

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.hidden_dim < 1 or self.latent_dim < 1:
            raise ConfigError("hidden_dim and latent_dim must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.ae_encoder_activation not in ("relu", "linear"):
            raise ConfigError(f"unknown ae_encoder_activation {self.ae_encoder_activation!r}")
        if self.variant.has_skips and self.k < 2:
            raise ConfigError(f"{self.variant.value} needs k >= 2 for any skip connection")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        return d


@dataclass
class AutoEncoder:
    """One-layer auto-encoder: affine encoder (+activation), affine decoder."""

    enc_w: Parameter
    enc_b: Parameter
    dec_w: Parameter
    dec_b: Parameter

    def parameters(self) -> list[Parameter]:
        return [self.enc_w, self.enc_b, self.dec_w, self.dec_b]


class DgaeModel:
    """Parameters and architecture metadata for every encoder variant."""

    def __init__(self, config: ModelConfig, m: int, weights, aes, alpha_logits, beta_logits, logvar_weight=None):
        self.config = config
        self.m = m
        self.weights: list[Parameter] = weights
        self.aes: list[AutoEncoder] = aes
        self.alpha_logits: list[Parameter] = alpha_logits
        self.beta_logits: list[Parameter] = beta_logits
        self.logvar_weight: Parameter | None = logvar_weight

    @property
    def k(self) -> int:
        return self.config.k

    def layer_dims(self) -> list[tuple[int, int]]:
        cfg = self.config
        dims = []
        for i in range(cfg.k):
            rows = self.m if i == 0 else cfg.hidden_dim
            cols = cfg.latent_dim if i == cfg.k - 1 else cfg.hidden_dim
            dims.append((rows, cols))
        return dims

    def parameters(self) -> list[Parameter]:
        params = list(self.weights)
        if self.logvar_weight is not None:
            params.append(self.logvar_weight)
        for ae in self.aes:
            params.extend(ae.parameters())
        params.extend(self.alpha_logits)
        params.extend(self.beta_logits)
        return params

    def named_arrays(self) -> dict[str, np.ndarray]:
        out = {f"W{i + 1}": w.value for i, w in enumerate(self.weights)}
        if self.logvar_weight is not None:
            out["W_logvar"] = self.logvar_weight.value
        for i, ae in enumerate(self.aes):
            out[f"ae{i + 1}_enc_w"] = ae.enc_w.value
            out[f"ae{i + 1}_enc_b"] = ae.enc_b.value
            out[f"ae{i + 1}_dec_w"] = ae.dec_w.value
            out[f"ae{i + 1}_dec_b"] = ae.dec_b.value
        for i, a in enumerate(self.alpha_logits):
            out[f"a{i + 1}"] = a.value
        for i, b in enumerate(self.beta_logits):
            out[f"b{i + 1}"] = b.value
        return out

    def alphas(self) -> np.ndarray:
        return np.array([_logistic_scalar(a.item()) for a in self.alpha_logits])

    def betas(self) -> np.ndarray:
        """Effective beta per layer; 0 where the weight is not square."""
        out = np.zeros(self.k)
        for i, b in enumerate(self.beta_logits):
            rows, cols = self.layer_dims()[i]
            if rows == cols:
                out[i] = _logistic_scalar(b.item())
        return out

    def snapshot(self) -> list[np.ndarray]:
        return [p.value.copy() for p in self.parameters()]

    def restore(self, snapshot: list[np.ndarray]) -> None:
        for p, v in zip(self.parameters(), snapshot, strict=True):
            p.value[...] = v


def _logistic_scalar(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def build(config: ModelConfig, m: int, n: int | None, rng: np.random.Generator) -> DgaeModel:
    """Glorot-initialized model with ``alpha = 0.5``, ``beta = 0.1`` and zero AE biases.

    ``n`` is accepted for interface symmetry; no parameter depends on it.
    """
    if m < 1:
        raise ConfigError(f"feature dimension must be positive, got {m}")
    if n is not None and n < 1:
        raise ConfigError(f"node count must be positive, got {n}")
    cfg = config
    model = DgaeModel(cfg, m, [], [], [], [])
    for i, (rows, cols) in enumerate(model.layer_dims()):
        model.weights.append(Parameter(ad.glorot_init(rows, cols, rng), name=f"W{i + 1}"))
    if cfg.variant.variational:
        rows, cols = model.layer_dims()[-1]
        model.weights[-1].name = "W_mu"
        model.logvar_weight = Parameter(ad.glorot_init(rows, cols, rng), name="W_logvar")
    if cfg.variant.has_skips:
        for i in range(cfg.k - 1):
            model.aes.append(
                AutoEncoder(
                    enc_w=Parameter(ad.glorot_init(m, cfg.hidden_dim, rng), name=f"ae{i + 1}.enc_w"),
                    enc_b=Parameter(np.zeros((1, cfg.hidden_dim)), name=f"ae{i + 1}.enc_b"),
                    dec_w=Parameter(ad.glorot_init(cfg.hidden_dim, m, rng), name=f"ae{i + 1}.dec_w"),
                    dec_b=Parameter(np.zeros((1, m)), name=f"ae{i + 1}.dec_b"),
                )
            )
            a0 = np.log(INITIAL_ALPHA / (1.0 - INITIAL_ALPHA))
            model.alpha_logits.append(Parameter([[a0]], name=f"a{i + 1}"))
    if cfg.variant.identity:
        b0 = np.log(INITIAL_BETA / (1.0 - INITIAL_BETA))
        model.beta_logits = [Parameter([[b0]], name=f"b{i + 1}") for i in range(cfg.k)]
    return model


# --------------------------------------------------------------------------
# forward passes


@dataclass
class EncoderOutput:
    z: Var
    ae_outputs: list[tuple[Var, Var]]
    mu: Var | None = None
    logvar: Var | None = None

    @property
    def embedding(self) -> np.ndarray:
        """Deterministic embedding: ``mu`` for variational models, else ``z``."""
        return (self.mu if self.mu is not None else self.z).value


def _act(model: DgaeModel, x: Var) -> Var:
    return x if model.config.linear_mode else ad.relu(x)


def _drop(model: DgaeModel, x: Var, training: bool, rng) -> Var:
    rate = model.config.dropout_rate
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout during training needs an rng")
    return ad.dropout(x, rate, rng)


def _effective_weight(model: DgaeModel, index: int, weight: Parameter, use_identity: bool) -> Var:
    rows, cols = weight.shape
    if not use_identity or rows != cols or not model.beta_logits:
        return weight
    beta = ad.sigmoid(model.beta_logits[index])
    return ad.add(ad.scale(ad.one_minus(beta), weight), ad.scale(beta, np.eye(rows)))


def _propagate(adj: SparseAdjacency, h: Var, w: Var) -> Var:
    """``adj @ h @ w`` with the cheaper association order."""
    if h.shape[1] > w.shape[1]:
        return ad.spmm(adj, ad.matmul(h, w))
    return ad.matmul(ad.spmm(adj, h), w)


def _check_input(model: DgaeModel, adj: SparseAdjacency, x) -> Var:
    x = ad.constant(x)
    if x.shape[1] != model.m:
        raise ad.DimensionError(f"features have {x.shape[1]} columns, model expects {model.m}")
    if x.shape[0] != adj.n:
        raise ad.DimensionError(f"features have {x.shape[0]} rows, adjacency has n={adj.n}")
    return x


def ae_forward(ae: AutoEncoder, inp, activation: str = "relu") -> tuple[Var, Var]:
    """Return ``(latent, reconstruction)``; the decoder is always affine."""
    inp = ad.constant(inp)
    if inp.shape[1] != ae.enc_w.shape[0]:
        raise ad.DimensionError(f"AE input has {inp.shape[1]} columns, encoder expects {ae.enc_w.shape[0]}")
    latent = ad.add_bias(ad.matmul(inp, ae.enc_w), ae.enc_b)
    if activation == "relu":
        latent = ad.relu(latent)
    recon = ad.add_bias(ad.matmul(latent, ae.dec_w), ae.dec_b)
    return latent, recon


def _gae_trunk(model, adj, x, use_identity, training, rng) -> Var:
    h = x
    for i in range(model.k - 1):
        w = _effective_weight(model, i, model.weights[i], use_identity)
        h = _act(model, _propagate(adj, _drop(model, h, training, rng), w))
    return h


def _skip_trunk(model, adj, x, use_identity, training, rng):
    cfg = model.config
    if model.k < 2:
        raise ConfigError("deepened forward passes need k >= 2")
    s = ad.spmm(adj, x)
    ae_in = x if cfg.variant is Variant.DGAE_FEAT else s
    ae_act = "linear" if cfg.linear_mode else cfg.ae_encoder_activation
    ae_outputs = [ae_forward(ae, ae_in, ae_act) for ae in model.aes]
    h = None
    for i in range(model.k - 1):
        w = _effective_weight(model, i, model.weights[i], use_identity)
        if i == 0:
            f = _act(model, ad.matmul(_drop(model, s, training, rng), w))
        else:
            f = _act(model, _propagate(adj, _drop(model, h, training, rng), w))
        alpha = ad.sigmoid(model.alpha_logits[i])
        h = ad.add(ad.scale(alpha, f), ad.scale(ad.one_minus(alpha), ae_outputs[i][0]))
    return h, ae_outputs


def forward_gae(model: DgaeModel, adj: SparseAdjacency, x, *, training: bool = False, rng=None) -> Var:
    """Plain k-layer GAE: ReLU hidden layers, linear output layer."""
    x = _check_input(model, adj, x)
    h = _gae_trunk(model, adj, x, False, training, rng)
    return _propagate(adj, _drop(model, h, training, rng), model.weights[-1])


def forward_dgae(model: DgaeModel, adj: SparseAdjacency, x, *, training: bool = False, rng=None):
    """Deepened GAE with AE skip connections; returns ``(z, ae_outputs)``.

    AEs consume ``adj @ x`` (co-embedding) or ``x`` for ``DGAE_FEAT``.
    """
    x = _check_input(model, adj, x)
    h, ae_outputs = _skip_trunk(model, adj, x, False, training, rng)
    z = _propagate(adj, _drop(model, h, training, rng), model.weights[-1])
    return z, ae_outputs


def forward_dgae_identity(model: DgaeModel, adj: SparseAdjacency, x, *, training: bool = False, rng=None):
    """As :func:`forward_dgae` with ``(1 - beta) W + beta I`` on square weights."""
    x = _check_input(model, adj, x)
    h, ae_outputs = _skip_trunk(model, adj, x, True, training, rng)
    w = _effective_weight(model, model.k - 1, model.weights[-1], True)
    z = _propagate(adj, _drop(model, h, training, rng), w)
    return z, ae_outputs


def forward_variational(model: DgaeModel, adj: SparseAdjacency, x, rng=None, *, training: bool = False,
                        eps: np.ndarray | None = None):
    """Gaussian encoder; returns ``(mu, logvar, z_sample, ae_outputs)``.

    ``z_sample = mu + exp(logvar / 2) * eps`` in training, ``mu`` otherwise.
    ``eps`` may be passed explicitly; otherwise it is drawn from ``rng``.
    """
    cfg = model.config
    if not cfg.variant.variational:
        raise ConfigError(f"{cfg.variant.value} is not a variational variant")
    x = _check_input(model, adj, x)
    use_identity = cfg.variant.identity
    if cfg.variant.has_skips:
        h, ae_outputs = _skip_trunk(model, adj, x, use_identity, training, rng)
    else:
        h, ae_outputs = _gae_trunk(model, adj, x, False, training, rng), []
    h = _drop(model, h, training, rng)
    k = model.k - 1
    mu = _propagate(adj, h, _effective_weight(model, k, model.weights[-1], use_identity))
    logvar = _propagate(adj, h, _effective_weight(model, k, model.logvar_weight, use_identity))
    if not training and eps is None:
        return mu, logvar, mu, ae_outputs
    if eps is None:
        if rng is None:
            raise ValueError("sampling needs an rng or explicit eps")
        eps = rng.standard_normal(mu.shape)
    std = ad.exp(ad.scale(ad.constant(0.5), logvar))
    z = ad.add(mu, ad.mul(std, eps))
    return mu, logvar, z, ae_outputs


def encode(model: DgaeModel, adj: SparseAdjacency, x, *, training: bool = False, rng=None) -> EncoderOutput:
    """Dispatch to the forward pass of ``model.config.variant``."""
    variant = model.config.variant
    if variant.variational:
        mu, logvar, z, aes = forward_variational(model, adj, x, rng, training=training)
        return EncoderOutput(z, aes, mu, logvar)
    if variant is Variant.GAE:
        return EncoderOutput(forward_gae(model, adj, x, training=training, rng=rng), [])
    if variant is Variant.DGAE_ID:
        z, aes = forward_dgae_identity(model, adj, x, training=training, rng=rng)
    else:
        z, aes = forward_dgae(model, adj, x, training=training, rng=rng)
    return EncoderOutput(z, aes)


# --------------------------------------------------------------------------
# decoder


def _as_array(z) -> np.ndarray:
    return z.value if isinstance(z, Var) else np.asarray(z, dtype=np.float64)


def decode(z) -> np.ndarray:
    """Dense ``sigmoid(Z Z^T)``; only sensible for small ``n``."""
    z = _as_array(z)
    return ad._logistic(z @ z.T)


def score_pairs(z, pairs) -> np.ndarray:
    """``sigmoid(z_u . z_v)`` for each ``(u, v)`` in ``pairs``."""
    z = _as_array(z)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size == 0:
        return np.empty(0)
    if pairs.min() < 0 or pairs.max() >= z.shape[0]:
        raise IndexError(f"pair index outside [0, {z.shape[0]})")
    logits = np.einsum("ij,ij->i", z[pairs[:, 0]], z[pairs[:, 1]])
    return ad._logistic(logits.reshape(-1, 1)).ravel()


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model: DgaeModel, path, metadata: dict | None = None) -> None:
    """Write config, ``m`` and all parameter arrays to one ``.npz`` archive."""
    header = {"config": model.config.to_dict(), "m": model.m, "metadata": metadata or {}}
    arrays = {k: v for k, v in model.named_arrays().items()}
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load_checkpoint(path) -> tuple[DgaeModel, dict]:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["__header__"]))
        config = ModelConfig(**header["config"])
        model = build(config, header["m"], None, np.random.default_rng(0))
        stored = {k: data[k] for k in data.files if k != "__header__"}
    expected = model.named_arrays()
    if set(stored) != set(expected):
        raise ConfigError(f"checkpoint arrays {sorted(stored)} do not match config {sorted(expected)}")
    for name, arr in expected.items():
        if stored[name].shape != arr.shape:
            raise ConfigError(f"checkpoint array {name} has shape {stored[name].shape}, expected {arr.shape}")
        arr[...] = stored[name]
    return model, header["metadata"]
