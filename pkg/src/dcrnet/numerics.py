"""Dense float64 tensors with reverse-mode gradients, plus Adam.

Every op returns a new :class:`Tensor`. When any input requires a gradient
the result remembers its parents and a closure mapping the upstream
gradient to one gradient per parent; :func:`backward` walks that record in
reverse topological order.
"""
from __future__ import annotations

import contextlib
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

SOFTMAX_EPS = 1e-12  # added inside the log of cross_entropy

_GRAD_ENABLED = True


class DimensionError(ValueError):
    pass


class LabelError(ValueError):
    pass


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (evaluation passes)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"expected a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _check_2d(t: Tensor, op: str):
    if t.data.ndim != 2:
        raise DimensionError(f"{op} expects a 2-d tensor, got shape {t.shape}")


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_2d(a, "matmul")
    _check_2d(b, "matmul")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data

    def back(g):
        return g @ bd.T, ad.T @ g

    return _result(ad @ bd, (a, b), back)


def transpose(x: Tensor) -> Tensor:
    _check_2d(x, "transpose")
    return _result(x.data.T.copy(), (x,), lambda g: (g.T,))


def concat_cols(*ts: Tensor) -> Tensor:
    for t in ts:
        _check_2d(t, "concat_cols")
    rows = {t.shape[0] for t in ts}
    if len(rows) != 1:
        raise DimensionError(f"concat_cols row mismatch: {[t.shape for t in ts]}")
    bounds = np.cumsum([0] + [t.shape[1] for t in ts])

    def back(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(ts)))

    return _result(np.concatenate([t.data for t in ts], axis=1), ts, back)


def concat_rows(*ts: Tensor) -> Tensor:
    for t in ts:
        _check_2d(t, "concat_rows")
    cols = {t.shape[1] for t in ts}
    if len(cols) != 1:
        raise DimensionError(f"concat_rows column mismatch: {[t.shape for t in ts]}")
    bounds = np.cumsum([0] + [t.shape[0] for t in ts])

    def back(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(ts)))

    return _result(np.concatenate([t.data for t in ts], axis=0), ts, back)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    _check_2d(x, "slice_cols")
    shape = x.shape

    def back(g):
        full = np.zeros(shape)
        full[:, start:stop] = g
        return (full,)

    return _result(x.data[:, start:stop].copy(), (x,), back)


def take_rows(x: Tensor, index) -> Tensor:
    """Gather rows ``x[index]``; repeated indices accumulate gradient."""
    _check_2d(x, "take_rows")
    index = np.asarray(index, dtype=np.int64)
    shape = x.shape

    def back(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    return _result(x.data[index], (x,), back)


def shift_rows(x: Tensor, k: int) -> Tensor:
    """``out[i] = x[i - k]`` with zero fill outside the valid range."""
    _check_2d(x, "shift_rows")
    n = x.shape[0]
    out = np.zeros_like(x.data)
    if k >= 0:
        out[k:] = x.data[: max(n - k, 0)]
    else:
        out[: max(n + k, 0)] = x.data[-k:]

    def back(g):
        gx = np.zeros_like(g)
        if k >= 0:
            gx[: max(n - k, 0)] = g[k:]
        else:
            gx[-k:] = g[: max(n + k, 0)]
        return (gx,)

    return _result(out, (x,), back)


# ---------------------------------------------------------------- elementwise


def _binary_operands(a, b, op):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.data.size != 1 and b.data.size != 1:
        raise DimensionError(f"{op}: cannot combine shapes {a.shape} and {b.shape}")
    return a, b


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    return np.reshape(g.sum(), shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _binary_operands(a, b, "add")
    sa, sb = a.shape, b.shape
    return _result(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _binary_operands(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _result(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _binary_operands(a, b, "mul")
    ad, bd = a.data, b.data

    def back(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _result(ad * bd, (a, b), back)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(x.data * c, (x,), lambda g: (g * c,))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a length-n bias vector to every row of an m x n matrix."""
    _check_2d(x, "add_bias")
    if b.data.ndim != 1 or b.shape[0] != x.shape[1]:
        raise DimensionError(f"add_bias: bias {b.shape} does not fit rows of {x.shape}")
    return _result(x.data + b.data, (x, b), lambda g: (g, g.sum(axis=0)))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _result(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    d = x.data
    y = np.empty_like(d)
    pos = d >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    y[~pos] = e / (1.0 + e)
    return _result(y, (x,), lambda g: (g * y * (1.0 - y),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(x.data * mask, (x,), lambda g: (g * mask,))


ELEMENTWISE = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "relu": relu,
    "add": add,
    "mul": mul,
    "scale": scale,
}


def elementwise(f: str, *args):
    """Dispatch by name, e.g. ``elementwise("tanh", x)``."""
    try:
        fn = ELEMENTWISE[f]
    except KeyError:
        raise ValueError(f"unknown elementwise op {f!r}; choose from {sorted(ELEMENTWISE)}") from None
    return fn(*args)


def detach(x: Tensor) -> Tensor:
    return Tensor(x.data.copy())


# ---------------------------------------------------------------- reductions & losses


def softmax_rows(x: Tensor) -> Tensor:
    _check_2d(x, "softmax_rows")
    if not np.all(np.isfinite(x.data)):
        raise FloatingPointError("softmax_rows received non-finite input")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _result(y, (x,), back)


def total(x: Tensor) -> Tensor:
    shape = x.shape
    return _result(np.array(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def sum_squares(x: Tensor) -> Tensor:
    d = x.data
    return _result(np.array((d * d).sum()), (x,), lambda g: (2.0 * g * d,))


def cross_entropy(probs: Tensor, gold) -> Tensor:
    """Summed ``-log(p[row, gold[row]] + eps)`` over rows.

    ``probs`` is 1 x C with an integer ``gold``, or m x C with m gold indices.
    """
    _check_2d(probs, "cross_entropy")
    m, c = probs.shape
    gold = np.atleast_1d(np.asarray(gold, dtype=np.int64))
    if gold.shape != (m,):
        raise DimensionError(f"cross_entropy: {m} rows but {gold.shape[0]} gold labels")
    if np.any(gold < 0) or np.any(gold >= c):
        raise LabelError(f"cross_entropy: gold index out of range [0, {c}): {gold.tolist()}")
    rows = np.arange(m)
    picked = probs.data[rows, gold] + SOFTMAX_EPS
    loss = -np.log(picked).sum()

    def back(g):
        full = np.zeros((m, c))
        full[rows, gold] = -g / picked
        return (full,)

    return _result(np.array(loss), (probs,), back)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when ``p == 0`` or not training."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return _result(x.data * keep, (x,), lambda g: (g * keep,))


# ---------------------------------------------------------------- backward


class GradRecord(Mapping):
    """Gradients of a scalar w.r.t. every leaf that requires one.

    Indexing a leaf that the loss never reached yields zeros of its shape.
    """

    def __init__(self, grads: dict[int, tuple[Tensor, np.ndarray]]):
        self._grads = grads

    def __getitem__(self, t: Tensor) -> np.ndarray:
        hit = self._grads.get(id(t))
        return hit[1] if hit is not None else np.zeros(t.shape)

    def __contains__(self, t) -> bool:
        return id(t) in self._grads

    def __iter__(self):
        return (t for t, _ in self._grads.values())

    def __len__(self):
        return len(self._grads)


def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> GradRecord:
    if loss.data.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
    leaves: dict[int, tuple[Tensor, np.ndarray]] = {}
    if not loss.requires_grad:
        return GradRecord(leaves)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g
            leaves[id(node)] = (node, g)
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    return GradRecord(leaves)


def zero_grad(params: Iterable[Tensor]):
    for p in params:
        p.grad = None


# ---------------------------------------------------------------- optimisation


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], grads: Mapping, state: AdamState):
    """One bias-corrected Adam update, in place. Returns ``(params, state)``."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads[p]
        if g.shape != p.shape:
            raise DimensionError(f"adam_step: gradient {g.shape} does not match {name} {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros(p.shape)
            state.v[name] = np.zeros(p.shape)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# ---------------------------------------------------------------- initialisation


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, name: str | None = None) -> Tensor:
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-r, r, size=(fan_in, fan_out)), requires_grad=True, name=name)


def zeros(*shape: int, name: str | None = None) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)
