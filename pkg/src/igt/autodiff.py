"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every primitive that touches a tensor with ``requires_grad`` appends a node
to the tape.  Nodes carry a global sequence number, so sorting the nodes
reachable from a loss by that number yields a topological order; the
backward pass walks it in reverse.
"""
from __future__ import annotations

import itertools
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

_seq = itertools.count()
_grad_enabled = True


class ShapeError(ValueError):
    pass


@contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@dataclass(eq=False)
class Node:
    seq: int
    op: str
    inputs: tuple["Tensor", ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node: Node | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __neg__(self): return mul(self, -1.0)
    def __matmul__(self, other): return matmul(self, other)
    def __rmatmul__(self, other): return matmul(other, self)
    def __getitem__(self, key): return getitem(self, key)

    def sum(self, axis=None, keepdims=False): return tsum(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 else shape)
    def transpose(self, *axes): return transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(op: str, out: np.ndarray, inputs: tuple[Tensor, ...], backward) -> Tensor:
    t = Tensor.__new__(Tensor)
    t.data = out
    t.grad = None
    t.name = None
    t.requires_grad = _grad_enabled and any(x.requires_grad for x in inputs)
    t.node = Node(next(_seq), op, inputs, backward) if t.requires_grad else None
    return t


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _record("add", a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _record("sub", a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return _record("mul", a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape),
                              _unbroadcast(g * a.data, b.shape)))


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _record("sigmoid", s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)
    return _record("tanh", t, (x,), lambda g: (g * (1.0 - t * t),))


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _record("relu", x.data * mask, (x,), lambda g: (g * mask,))


def tabs(x: Tensor) -> Tensor:
    x = as_tensor(x)
    sign = np.sign(x.data)
    return _record("abs", np.abs(x.data), (x,), lambda g: (g * sign,))


# ---------------------------------------------------------------- reductions

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _record("sum", np.asarray(out), (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    if count == 0:
        raise ShapeError(f"mean over empty axis of shape {x.shape}")
    return mul(tsum(x, axis, keepdims), 1.0 / count)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: batch dims of {a.shape} and {b.shape} do not broadcast") from None

    def backward(g):
        if b.ndim == 2:
            ga = g @ b.data.T
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            ga = g @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record("matmul", out, (a, b), backward)


def spmm(adj: sp.spmatrix, x: Tensor) -> Tensor:
    """Constant sparse matrix times a dense tensor; ``adj`` is not differentiated."""
    x = as_tensor(x)
    if x.ndim != 2 or adj.shape[1] != x.shape[0]:
        raise ShapeError(f"spmm: sparse {adj.shape} cannot multiply dense {x.shape}")
    adj_t = adj.T.tocsr()
    return _record("spmm", np.asarray(adj @ x.data), (x,), lambda g: (np.asarray(adj_t @ g),))


# ---------------------------------------------------------------- shape ops

def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of an empty list")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: shapes {[t.shape for t in tensors]} mismatch on axis {axis}") from None
    ax = axis % out.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def backward(g):
        return tuple(np.take(g, np.arange(lo, hi), axis=ax) for lo, hi in zip(bounds[:-1], bounds[1:]))

    return _record("concat", out, tuple(tensors), backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


def getitem(x: Tensor, key) -> Tensor:
    """Slicing and integer-array indexing; repeated indices accumulate in backward."""
    x = as_tensor(x)
    out = x.data[key]

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, key, g)
        return (gx,)

    return _record("slice", np.array(out), (x,), backward)


def take_rows(x: Tensor, rows) -> Tensor:
    rows = np.asarray(rows, dtype=np.intp)
    if rows.size and (rows.min() < -x.shape[0] or rows.max() >= x.shape[0]):
        raise ShapeError(f"take_rows: index out of range for {x.shape[0]} rows")
    return getitem(x, rows)


def set_rows(x: Tensor, rows, values: Tensor) -> Tensor:
    """Copy of ``x`` with ``x[rows] = values``; rows must be unique."""
    x, values = as_tensor(x), as_tensor(values)
    rows = np.asarray(rows, dtype=np.intp)
    if values.shape != (len(rows),) + x.shape[1:]:
        raise ShapeError(f"set_rows: values {values.shape} do not fit rows {len(rows)} of {x.shape}")
    out = x.data.copy()
    out[rows] = values.data

    def backward(g):
        gx = g.copy()
        gx[rows] = 0.0
        return gx, g[rows]

    return _record("set_rows", out, (x, values), backward)


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from None
    return _record("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    x = as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _record("transpose", x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def broadcast_to(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise ShapeError(f"broadcast_to: {x.shape} -> {tuple(shape)}") from None
    return _record("broadcast", out, (x,), lambda g: (_unbroadcast(g, x.shape),))


# ---------------------------------------------------------------- normalizers

def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    x = as_tensor(x)
    e = np.exp(x.data - x.data.max(axis=-1, keepdims=True))
    s = e / e.sum(axis=-1, keepdims=True)
    return _record("softmax", s, (x,),
                   lambda g: (s * (g - (g * s).sum(axis=-1, keepdims=True)),))


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean and unit variance (no affine part)."""
    x = as_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - xhat * gx),)

    return _record("layer_norm", xhat, (x,), backward)


# ---------------------------------------------------------------- tape / backward

@dataclass
class Tape:
    """Recorded primitive applications reachable from one output, in topological order."""

    nodes: list[Node] = field(default_factory=list)
    outputs: dict[int, Tensor] = field(default_factory=dict)

    @classmethod
    def from_output(cls, out: Tensor) -> "Tape":
        seen: dict[int, Tensor] = {}
        stack_ = [out]
        while stack_:
            t = stack_.pop()
            if t.node is None or t.node.seq in seen:
                continue
            seen[t.node.seq] = t
            stack_.extend(t.node.inputs)
        order = sorted(seen)
        return cls([seen[s].node for s in order], {s: seen[s] for s in order})


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires grad."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    tape = Tape.from_output(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        out = tape.outputs[node.seq]
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            grads[key] = grads[key] + gi if key in grads else gi
            if inp.node is None:
                leaves[key] = inp
    for key, leaf in leaves.items():
        g = grads[key].reshape(leaf.shape)
        leaf.grad = g if leaf.grad is None else leaf.grad + g


# ---------------------------------------------------------------- optimizer

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], state: AdamState) -> None:
    """Bias-corrected Adam update of every parameter in place, using its ``.grad``."""
    missing = [k for k, p in params.items() if p.grad is None]
    if missing:
        raise ValueError(f"adam_step: no gradient for {missing}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = p.grad
        m = state.m.get(name)
        if m is None or m.shape != p.shape:
            m = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        p.data = p.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, self.state)


# ---------------------------------------------------------------- gradient checking

def numerical_grad(f: Callable[[], float], x: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of the scalar ``f()`` with respect to ``x.data``."""
    g = np.zeros_like(x.data)
    flat, gflat = x.data.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray, zero_tol: float = 1e-7) -> float:
    """||a - n|| / max(||a||, ||n||).

    Returns 0 when both norms are below ``zero_tol``: an exactly vanishing
    gradient (e.g. a bias the output is invariant to) is then only measured
    as finite-difference roundoff, which has no meaningful relative size.
    """
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale < zero_tol:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def gradcheck(loss_fn: Callable[[], Tensor], params: dict[str, Tensor] | Iterable[Tensor],
              h: float = 1e-5) -> dict[str, float]:
    """Relative error between backprop and central differences for every parameter."""
    if not isinstance(params, dict):
        params = {f"p{i}": p for i, p in enumerate(params)}
    for p in params.values():
        p.grad = None
    backward(loss_fn())
    errors = {}
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        with no_grad():
            numeric = numerical_grad(lambda: float(loss_fn().data), p, h)
        errors[name] = relative_error(analytic, numeric)
    return errors
