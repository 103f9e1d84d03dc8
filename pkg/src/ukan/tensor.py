"""Dense float64 tensors with reverse-mode autodiff and a forward tangent channel.

The graph is rebuilt on every forward pass (no retained state). Each op
records its parents and a backward closure; ``backward`` runs one reverse
topological sweep from a scalar loss.

Tangents are ordinary graph tensors: when an input carries a tangent, the op
builds the directional-derivative expression out of the same recorded
primitives. A later ``backward`` therefore differentiates *through* the
tangent computation, which is what a second-order (forward-over-reverse)
residual loss needs.
"""

from __future__ import annotations

import contextlib
import itertools

import numpy as np

from .errors import ContractError, DimensionError, DomainError

_node_ids = itertools.count(1)

# While a tangent expression is being built, further tangent propagation is
# suppressed: the JVP of a JVP is second-order forward mode, which we never want.
_tangent_enabled = True


@contextlib.contextmanager
def _no_tangent():
    global _tangent_enabled
    prev = _tangent_enabled
    _tangent_enabled = False
    try:
        yield
    finally:
        _tangent_enabled = prev


class Tensor:
    __slots__ = ("values", "tangent", "node_id", "param", "parents", "_backward", "grad")

    def __init__(self, values, param: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.param = param
        self.node_id = next(_node_ids) if param else None
        self.tangent: Tensor | None = None
        self.parents: tuple = ()
        self._backward = None
        self.grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.values.shape

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, param={self.param})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def parameter(values) -> Tensor:
    return Tensor(values, param=True)


def make_node(values, parents, backward_fn) -> Tensor:
    """Record one op. ``backward_fn(upstream, accumulate)`` pushes gradients
    to parents via ``accumulate(parent, grad_array)``."""
    out = Tensor(values)
    out.node_id = next(_node_ids)
    out.parents = tuple(p for p in parents if isinstance(p, Tensor))
    out._backward = backward_fn
    return out


def tangent_active(*tensors) -> bool:
    return _tangent_enabled and any(
        isinstance(t, Tensor) and t.tangent is not None for t in tensors
    )


def attach_tangent(out: Tensor, build) -> Tensor:
    """Run ``build()`` with further tangent propagation disabled and attach
    the result as ``out.tangent``."""
    with _no_tangent():
        out.tangent = build()
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary(a, b, fwd, da, db):
    a, b = as_tensor(a), as_tensor(b)
    try:
        v = fwd(a.values, b.values)
    except ValueError as e:
        raise DimensionError(f"incompatible shapes {a.shape} and {b.shape}") from e

    def bwd(g, acc):
        acc(a, _unbroadcast(da(g, a.values, b.values), a.shape))
        acc(b, _unbroadcast(db(g, a.values, b.values), b.shape))

    return make_node(v, (a, b), bwd), a, b


def add(a, b) -> Tensor:
    out, a, b = _binary(a, b, np.add, lambda g, x, y: g, lambda g, x, y: g)
    if tangent_active(a, b):
        attach_tangent(out, lambda: _tan_sum(a.tangent, b.tangent))
    return out


def sub(a, b) -> Tensor:
    out, a, b = _binary(a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g)
    if tangent_active(a, b):
        def build():
            ta, tb = a.tangent, b.tangent
            if ta is None:
                return -tb
            if tb is None:
                return ta
            return sub(ta, tb)
        attach_tangent(out, build)
    return out


def mul(a, b) -> Tensor:
    out, a, b = _binary(a, b, np.multiply, lambda g, x, y: g * y, lambda g, x, y: g * x)
    if tangent_active(a, b):
        def build():
            parts = []
            if a.tangent is not None:
                parts.append(mul(a.tangent, b))
            if b.tangent is not None:
                parts.append(mul(a, b.tangent))
            return parts[0] if len(parts) == 1 else add(parts[0], parts[1])
        attach_tangent(out, build)
    return out


def _tan_sum(ta: Tensor | None, tb: Tensor | None) -> Tensor:
    if ta is None:
        return tb
    if tb is None:
        return ta
    return add(ta, tb)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul needs (m,n)x(n,p), got {a.shape} and {b.shape}")
    v = a.values @ b.values

    def bwd(g, acc):
        acc(a, g @ b.values.T)
        acc(b, a.values.T @ g)

    out = make_node(v, (a, b), bwd)
    if tangent_active(a, b):
        def build():
            parts = []
            if a.tangent is not None:
                parts.append(matmul(a.tangent, b))
            if b.tangent is not None:
                parts.append(matmul(a, b.tangent))
            return parts[0] if len(parts) == 1 else add(parts[0], parts[1])
        attach_tangent(out, build)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = 1.0 / (1.0 + np.exp(-x.values))

    def bwd(g, acc):
        acc(x, g * s * (1.0 - s))

    out = make_node(s, (x,), bwd)
    if tangent_active(x):
        def build():
            sv = sigmoid(x)
            return mul(mul(sv, sub(1.0, sv)), x.tangent)
        attach_tangent(out, build)
    return out


def silu(x) -> Tensor:
    x = as_tensor(x)
    s = 1.0 / (1.0 + np.exp(-x.values))

    def bwd(g, acc):
        acc(x, g * (s + x.values * s * (1.0 - s)))

    out = make_node(x.values * s, (x,), bwd)
    if tangent_active(x):
        def build():
            sv = sigmoid(x)
            deriv = add(sv, mul(mul(x, sv), sub(1.0, sv)))
            return mul(deriv, x.tangent)
        attach_tangent(out, build)
    return out


def square(x) -> Tensor:
    x = as_tensor(x)

    def bwd(g, acc):
        acc(x, g * 2.0 * x.values)

    out = make_node(x.values * x.values, (x,), bwd)
    if tangent_active(x):
        attach_tangent(out, lambda: mul(mul(2.0, x), x.tangent))
    return out


def gather_rows(t, indices) -> Tensor:
    t = as_tensor(t)
    idx = np.asarray(indices, dtype=np.int64)
    n = t.shape[0]
    if idx.size and (idx.min() < -n or idx.max() >= n):
        raise IndexError(f"gather index out of range for extent {n}")
    v = t.values[idx]

    def bwd(g, acc):
        gt = np.zeros_like(t.values)
        np.add.at(gt, idx, g)
        acc(t, gt)

    out = make_node(v, (t,), bwd)
    if tangent_active(t):
        attach_tangent(out, lambda: gather_rows(t.tangent, idx))
    return out


def concat_last(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.values.ndim != b.values.ndim or a.shape[:-1] != b.shape[:-1]:
        raise DimensionError(f"concat_last leading extents differ: {a.shape} vs {b.shape}")
    na = a.shape[-1]
    v = np.concatenate([a.values, b.values], axis=-1)

    def bwd(g, acc):
        acc(a, g[..., :na])
        acc(b, g[..., na:])

    out = make_node(v, (a, b), bwd)
    if tangent_active(a, b):
        def build():
            ta = a.tangent if a.tangent is not None else as_tensor(np.zeros(a.shape))
            tb = b.tangent if b.tangent is not None else as_tensor(np.zeros(b.shape))
            return concat_last(ta, tb)
        attach_tangent(out, build)
    return out


def reshape(t, shape) -> Tensor:
    t = as_tensor(t)
    shape = tuple(shape)
    old = t.shape
    v = t.values.reshape(shape)

    def bwd(g, acc):
        acc(t, g.reshape(old))

    out = make_node(v, (t,), bwd)
    if tangent_active(t):
        attach_tangent(out, lambda: reshape(t.tangent, shape))
    return out


def swap_last2(t) -> Tensor:
    t = as_tensor(t)
    if t.values.ndim < 2:
        raise DimensionError(f"need at least 2 dims, got shape {t.shape}")
    v = np.ascontiguousarray(t.values.swapaxes(-1, -2))

    def bwd(g, acc):
        acc(t, g.swapaxes(-1, -2))

    out = make_node(v, (t,), bwd)
    if tangent_active(t):
        attach_tangent(out, lambda: swap_last2(t.tangent))
    return out


def clamp(t, lo: float, hi: float) -> Tensor:
    t = as_tensor(t)
    v = np.clip(t.values, lo, hi)
    mask = ((t.values >= lo) & (t.values <= hi)).astype(np.float64)

    def bwd(g, acc):
        acc(t, g * mask)

    out = make_node(v, (t,), bwd)
    if tangent_active(t):
        attach_tangent(out, lambda: mul(t.tangent, mask))
    return out


def sum_all(t) -> Tensor:
    t = as_tensor(t)

    def bwd(g, acc):
        acc(t, np.full(t.shape, float(g)))

    out = make_node(t.values.sum(), (t,), bwd)
    if tangent_active(t):
        attach_tangent(out, lambda: sum_all(t.tangent))
    return out


def mean_all(t) -> Tensor:
    t = as_tensor(t)
    if t.values.size == 0:
        raise DomainError("mean of empty tensor")
    n = t.values.size

    def bwd(g, acc):
        acc(t, np.full(t.shape, float(g) / n))

    out = make_node(t.values.mean(), (t,), bwd)
    if tangent_active(t):
        attach_tangent(out, lambda: mean_all(t.tangent))
    return out


def mse(pred, target) -> Tensor:
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"mse shapes differ: {pred.shape} vs {target.shape}")
    if pred.values.size == 0:
        raise DomainError("mse of empty batch")
    return mean_all(square(sub(pred, target)))


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean cross-entropy of logits [n, c] against integer labels [n]."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.values.ndim != 2 or labels.ndim != 1 or logits.shape[0] != labels.shape[0]:
        raise DimensionError(
            f"cross-entropy needs [n,c] logits and [n] labels, got {logits.shape} and {labels.shape}"
        )
    n = logits.shape[0]
    if n == 0:
        raise DomainError("cross-entropy of empty batch")
    if logits.tangent is not None:
        raise NotImplementedError("tangent propagation through cross-entropy is unsupported")
    z = logits.values - logits.values.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    loss = -logp[np.arange(n), labels].mean()

    def bwd(g, acc):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        acc(logits, g * p / n)

    return make_node(loss, (logits,), bwd)


def reduce_loss(kind: str, pred, target) -> Tensor:
    if kind == "mse":
        return mse(pred, target)
    if kind == "softmax_cross_entropy":
        return softmax_cross_entropy(pred, target)
    raise ContractError(f"unknown loss kind {kind!r}")


def seed_tangent(t, direction) -> Tensor:
    """Return a view of ``t`` whose downstream ops propagate the directional
    derivative along ``direction``."""
    t = as_tensor(t)
    direction = as_tensor(direction)
    if direction.shape != t.shape:
        raise DimensionError(f"tangent seed shape {direction.shape} != {t.shape}")

    def bwd(g, acc):
        acc(t, g)

    out = make_node(t.values, (t,), bwd)
    out.tangent = direction
    return out


def backward(loss: Tensor) -> dict:
    """Reverse sweep from a scalar loss. Returns {node_id: gradient Tensor}
    for every parameter leaf reached; also sets ``.grad`` on those leaves."""
    if not isinstance(loss, Tensor) or loss.node_id is None:
        raise ContractError("loss must be a recorded Tensor")
    if loss.values.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")

    topo: list[Tensor] = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.node_id is not None and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    by_id: dict[int, Tensor] = {id(loss): loss}

    def accumulate(t: Tensor, g: np.ndarray):
        if t.node_id is None:
            return
        key = id(t)
        if key in grads:
            grads[key] = grads[key] + g
        else:
            grads[key] = np.array(g, dtype=np.float64, copy=True)
            by_id[key] = t

    result: dict[int, Tensor] = {}
    for node in reversed(topo):
        g = grads.get(id(node))
        if g is None:
            continue
        if node._backward is not None:
            node._backward(g, accumulate)
        if node.param:
            node.grad = g
            result[node.node_id] = Tensor(g)
    return result
