"""Define-by-run reverse-mode differentiation over dense 64-bit matrices.

Every value is a 2-D ``float64`` array wrapped in :class:`Var`; scalars are
``1 x 1``. Operations executed while a :class:`Tape` is active are recorded
and :func:`backward` replays their adjoints in reverse order. Outside a tape
the same functions simply compute values, which is how evaluation runs.

The sparse adjacency is always a constant: :func:`spmm` only propagates
gradients to its dense operand.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .graph import SparseAdjacency

__all__ = [
    "AdamState",
    "DimensionError",
    "Parameter",
    "Tape",
    "Var",
    "adam_step",
    "add",
    "add_bias",
    "backward",
    "constant",
    "custom_op",
    "dropout",
    "exp",
    "frobenius_sq",
    "glorot_init",
    "matmul",
    "mul",
    "one_minus",
    "relu",
    "scale",
    "sigmoid",
    "spmm",
    "sub",
    "sum_all",
    "zero_grads",
]


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


_ids = itertools.count()


class Var:
    """A node in the computation: a 2-D float64 array plus graph bookkeeping."""

    __slots__ = ("value", "requires_grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        if arr.ndim != 2:
            raise DimensionError(f"expected a 2-D matrix, got ndim={arr.ndim}")
        self.value = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise DimensionError(f"item() needs a 1x1 value, got {self.value.shape}")
        return float(self.value[0, 0])

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<{type(self).__name__}{label} shape={self.shape}>"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Var):
    """Trainable leaf carrying a persistent gradient slot."""

    __slots__ = ("grad", "id")

    def __init__(self, value, name: str | None = None):
        super().__init__(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self.grad = np.zeros_like(self.value)
        self.id = next(_ids)


def constant(value) -> Var:
    return value if isinstance(value, Var) else Var(value)


def zero_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.grad.fill(0.0)


# --------------------------------------------------------------------------
# tape

_state = threading.local()


def _active_tape() -> "Tape | None":
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


@dataclass
class _Record:
    out: Var
    inputs: tuple
    backward: Callable


class Tape:
    """Ordered log of executed differentiable operations.

    Use as a context manager; tapes are thread-local so independent runs on
    separate threads never share one.
    """

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self):
        if not hasattr(_state, "stack"):
            _state.stack = []
        _state.stack.append(self)
        return self

    def __exit__(self, *exc):
        _state.stack.pop()
        return False

    def __len__(self):
        return len(self.records)


def custom_op(value: np.ndarray, inputs: Sequence[Var], backward_fn: Callable) -> Var:
    """Wrap ``value`` as the output of an operation on ``inputs``.

    ``backward_fn(out_grad)`` must return one gradient (or ``None``) per
    input. Nothing is recorded when no tape is active or no input needs a
    gradient.
    """
    needs = any(v.requires_grad for v in inputs)
    out = Var(value, requires_grad=needs)
    tape = _active_tape()
    if needs and tape is not None:
        tape.records.append(_Record(out, tuple(inputs), backward_fn))
    return out


def backward(loss: Var, tape: Tape) -> None:
    """Accumulate ``d loss / d p`` into ``p.grad`` for every reachable Parameter."""
    if loss.shape != (1, 1):
        raise DimensionError(f"backward needs a scalar (1x1) root, got {loss.shape}")
    adjoints: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    if isinstance(loss, Parameter):
        loss.grad += 1.0
        return
    for rec in reversed(tape.records):
        g = adjoints.pop(id(rec.out), None)
        if g is None:
            continue
        grads = rec.backward(g)
        for inp, gi in zip(rec.inputs, grads):
            if gi is None or not inp.requires_grad:
                continue
            if isinstance(inp, Parameter):
                inp.grad += gi
            else:
                key = id(inp)
                if key in adjoints:
                    adjoints[key] = adjoints[key] + gi
                else:
                    adjoints[key] = gi


# --------------------------------------------------------------------------
# primitives


def _same_shape(a: Var, b: Var, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def matmul(a, b) -> Var:
    a, b = constant(a), constant(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return custom_op(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def spmm(s: SparseAdjacency, d) -> Var:
    """Sparse (constant, symmetric) times dense."""
    d = constant(d)
    if s.n != d.shape[0]:
        raise DimensionError(f"spmm: adjacency n={s.n} vs dense rows={d.shape[0]}")
    mat = s.matrix
    return custom_op(np.asarray(mat @ d.value), (d,), lambda g: (np.asarray(mat.T @ g),))


def add(a, b) -> Var:
    a, b = constant(a), constant(b)
    _same_shape(a, b, "add")
    return custom_op(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a, b) -> Var:
    a, b = constant(a), constant(b)
    _same_shape(a, b, "sub")
    return custom_op(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a, b) -> Var:
    """Element-wise product."""
    a, b = constant(a), constant(b)
    _same_shape(a, b, "mul")
    av, bv = a.value, b.value
    return custom_op(av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(s, x) -> Var:
    """Multiply matrix ``x`` by the 1x1 scalar ``s``."""
    s, x = constant(s), constant(x)
    if s.shape != (1, 1):
        raise DimensionError(f"scale: factor must be 1x1, got {s.shape}")
    sv, xv = s.value[0, 0], x.value
    return custom_op(sv * xv, (s, x), lambda g: (np.sum(g * xv).reshape(1, 1), sv * g))


def one_minus(x) -> Var:
    x = constant(x)
    return custom_op(1.0 - x.value, (x,), lambda g: (-g,))


def add_bias(x, b) -> Var:
    """``x + 1 b`` where ``b`` is a ``1 x cols`` row broadcast over rows."""
    x, b = constant(x), constant(b)
    if b.shape != (1, x.shape[1]):
        raise DimensionError(f"add_bias: bias {b.shape} for input {x.shape}")
    return custom_op(x.value + b.value, (x, b), lambda g: (g, g.sum(axis=0, keepdims=True)))


def relu(x) -> Var:
    x = constant(x)
    mask = x.value > 0
    return custom_op(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def _logistic(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x) -> Var:
    x = constant(x)
    y = _logistic(x.value)
    return custom_op(y, (x,), lambda g: (g * y * (1.0 - y),))


def exp(x) -> Var:
    x = constant(x)
    y = np.exp(x.value)
    return custom_op(y, (x,), lambda g: (g * y,))


def sum_all(x) -> Var:
    x = constant(x)
    shape = x.shape
    return custom_op(np.sum(x.value).reshape(1, 1), (x,), lambda g: (np.full(shape, g[0, 0]),))


def frobenius_sq(a, b) -> Var:
    """``sum((a - b)**2)`` as a 1x1 value."""
    a, b = constant(a), constant(b)
    _same_shape(a, b, "frobenius_sq")
    diff = a.value - b.value
    return custom_op(
        np.sum(diff * diff).reshape(1, 1),
        (a, b),
        lambda g: (2.0 * g[0, 0] * diff, -2.0 * g[0, 0] * diff),
    )


def dropout(x, rate: float, rng: np.random.Generator) -> Var:
    """Inverted dropout: keep with probability ``1 - rate`` and rescale."""
    x = constant(x)
    if rate <= 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return custom_op(x.value * mask, (x,), lambda g: (g * mask,))


# --------------------------------------------------------------------------
# initialization and optimization


def glorot_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform on ``[-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))]``."""
    if rows <= 0 or cols <= 0:
        raise DimensionError(f"glorot_init needs positive dims, got {rows}x{cols}")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: Iterable[Parameter]) -> None:
    """One bias-corrected Adam update of ``params`` in place."""
    params = list(params)
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise FloatingPointError(
                f"non-finite gradient in parameter {p.name or p.id} (shape {p.shape}, "
                f"max |g|={np.nanmax(np.abs(p.grad))})"
            )
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for p in params:
        m = state.m.get(p.id)
        if m is None:
            m = state.m[p.id] = np.zeros_like(p.value)
            state.v[p.id] = np.zeros_like(p.value)
        v = state.v[p.id]
        m *= state.beta1
        m += (1.0 - state.beta1) * p.grad
        v *= state.beta2
        v += (1.0 - state.beta2) * p.grad * p.grad
        p.value -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
