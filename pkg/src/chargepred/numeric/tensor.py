"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every operation that touches a tensor requiring gradients records a node
(parents plus a local-gradient closure).  Node ids come from a global
counter, so sorting reachable nodes by id yields a valid topological order;
:class:`Tape` holds that order and :func:`backward` walks it in reverse.
"""
from __future__ import annotations

import contextlib
import itertools
import os
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..errors import ContractError, DimensionError, EmptyInputError

_node_ids = itertools.count()

DEBUG = bool(os.environ.get("CHARGEPRED_DEBUG"))


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Build results without recording any nodes."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


def set_debug(flag: bool) -> None:
    """Toggle finiteness checks on every op result."""
    global DEBUG
    DEBUG = bool(flag)


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_id")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if DEBUG and not np.all(np.isfinite(arr)):
            raise FloatingPointError(f"non-finite value in tensor {name or ''}".strip())
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self._id = next(_node_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _scalar_error(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def _scalar_error(t: Tensor):
    raise ContractError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn: BackwardFn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    if lead:
        grad = grad.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    return _node(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (-g,))


def tabs(a: Tensor) -> Tensor:
    # np.sign(0) == 0 gives the zero subgradient at the kink
    return _node(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _node(y, (a,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid(a.data)
    return _node(y, (a,), lambda g: (g * y * (1.0 - y),))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _node(y, (a,), lambda g: (g * y,))


def log(a: Tensor) -> Tensor:
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return _node(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "abs": tabs,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "exp": exp,
}


def elementwise(op: str, *args) -> Tensor:
    try:
        fn = ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


# ------------------------------------------------------------------ structure

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs operands of rank >= 2, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul batch dimensions differ: {a.shape} @ {b.shape}") from None

    def back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return (None if ga is None else _unbroadcast(ga, a.shape),
                None if gb is None else _unbroadcast(gb, b.shape))

    return _node(out, (a, b), back)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(out, (a,), back)


def reshape(a: Tensor, shape) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {a.shape} to {shape}") from None
    return _node(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is not None and len(axes) == 1 and isinstance(axes[0], (tuple, list)):
        axes = tuple(axes[0])
    out = np.transpose(a.data, axes)
    inverse = None if axes is None else tuple(np.argsort(axes))
    return _node(out, (a,), lambda g: (np.transpose(g, inverse),))


def getitem(a: Tensor, idx) -> Tensor:
    out = a.data[idx]

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _node(np.array(out, copy=True), (a,), back)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise EmptyInputError("concat of zero tensors")
    nonempty = [t for t in ts if t.size > 0] or ts[:1]
    try:
        out = np.concatenate([t.data for t in nonempty], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {exc}") from None
    bounds = np.cumsum([t.shape[axis] for t in nonempty])[:-1]
    nonempty_ids = {id(t) for t in nonempty}

    def back(g):
        parts = iter(np.split(g, bounds, axis=axis))
        return tuple(next(parts) if id(t) in nonempty_ids else np.zeros_like(t.data) for t in ts)

    return _node(out, tuple(ts), back)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise EmptyInputError("stack of zero tensors")
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"stack: {exc}") from None
    n = len(ts)
    return _node(out, tuple(ts),
                 lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along ``axis``; positions where ``mask`` is False get exactly 0."""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise EmptyInputError("softmax over an empty axis")
    logits = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
        if not np.all(mask.any(axis=axis)):
            raise EmptyInputError("softmax row with every position masked")
        logits = np.where(mask, logits, -np.inf)
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _node(y, (x,), back)


def embedding(table: Tensor, ids: np.ndarray, padding_idx: int | None = 0) -> Tensor:
    """Row lookup; the padding row never receives gradient."""
    ids = np.asarray(ids, dtype=np.int64)
    out = table.data[ids]

    def back(g):
        full = np.zeros_like(table.data)
        flat_ids = ids.reshape(-1)
        flat_g = g.reshape(-1, table.shape[-1])
        if padding_idx is not None:
            keep = flat_ids != padding_idx
            flat_ids, flat_g = flat_ids[keep], flat_g[keep]
        np.add.at(full, flat_ids, flat_g)
        return (full,)

    return _node(out, (table,), back)


def custom(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn: BackwardFn) -> Tensor:
    """Record an op whose local gradients are computed by ``backward_fn``."""
    return _node(data, parents, backward_fn)


# ------------------------------------------------------------------- backward

class Tape:
    """Ops reachable from a root tensor, in creation (topological) order."""

    def __init__(self, root: Tensor):
        seen: dict[int, Tensor] = {}
        stack = [root]
        while stack:
            t = stack.pop()
            if id(t) in seen or not t.requires_grad:
                continue
            seen[id(t)] = t
            stack.extend(t._parents)
        self.nodes: list[Tensor] = sorted(seen.values(), key=lambda t: t._id)

    @property
    def ops(self) -> list[Tensor]:
        return [t for t in self.nodes if not t.is_leaf]

    def __len__(self) -> int:
        return len(self.nodes)


def backward(loss: Tensor) -> Tape:
    """Populate ``.grad`` of every leaf reachable from the scalar ``loss``.

    Leaf gradients accumulate across calls; call ``zero_grad`` between steps.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor requiring grad")
    tape = Tape(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return tape
