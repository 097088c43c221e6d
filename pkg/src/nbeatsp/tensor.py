"""Dense tensors with define-by-run reverse-mode differentiation.

Only the operations the forecasting network needs are provided. Every
operation returns a new :class:`Tensor`; when at least one operand tracks
gradients the result records its parents and a local backward rule, and
:func:`backward` walks that tape in reverse topological order.

Example:
    >>> W = Tensor([[2.0], [3.0]], requires_grad=True)
    >>> y = affine(Tensor([[1.0, 1.0]]), W, Tensor([1.0]))
    >>> y.data
    array([[6.]])
    >>> grads = backward(y.sum())
    >>> grads[W].ravel().tolist()
    [1.0, 1.0]
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from numbers import Number
from typing import Callable, Sequence

import numpy as np

from .exceptions import DimensionError

EPS = 1e-8

_FLOAT_TYPES = (np.float32, np.float64)


def _as_array(data, dtype=None) -> np.ndarray:
    if isinstance(data, Tensor):
        data = data.data
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype.type in _FLOAT_TYPES:
        return arr
    return arr.astype(np.float64)


class Tensor:
    """An immutable n-d array, optionally tracking gradients.

    Attributes:
        data: Underlying contiguous numpy array (float64 unless created as float32).
        grad: Gradient populated by :func:`backward`, same shape as ``data``.
        requires_grad: Whether gradients flow into this tensor.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_rule", "name")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        arr = _as_array(data, dtype)
        self.data = arr if arr.flags.c_contiguous else np.ascontiguousarray(arr)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._rule: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def abs(self):
        return tabs(self)


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if (like is not None and isinstance(x, (Number, np.number))) else None
    return Tensor(x, dtype=dtype)


_GRAD = threading.local()


def grad_enabled() -> bool:
    return getattr(_GRAD, "enabled", True)


@contextmanager
def no_grad():
    """Within the block, operations record no tape (inference mode, per thread)."""
    prev = grad_enabled()
    _GRAD.enabled = False
    try:
        yield
    finally:
        _GRAD.enabled = prev


def _make(data: np.ndarray, parents: tuple[Tensor, ...], rule) -> Tensor:
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._rule = rule
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` back down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary_operands(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _lift(b, a)
    b = _lift(b)
    return _lift(a, b), b


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    _check_broadcast(a, b, "add")
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    _check_broadcast(a, b, "sub")
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    _check_broadcast(a, b, "mul")
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    """Plain elementwise quotient; callers guard denominators (see :func:`guarded_div`)."""
    a, b = _binary_operands(a, b)
    _check_broadcast(a, b, "div")
    out = a.data / b.data

    def rule(g):
        ga = g / b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * out, b.shape)

    return _make(out, (a, b), rule)


def guarded_div(a, b, eps: float = EPS) -> Tensor:
    """``a / (|b| + eps)``, finite whenever ``a`` is."""
    return div(a, add(tabs(_lift(b)), eps))


def neg(a) -> Tensor:
    a = _lift(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def tabs(a) -> Tensor:
    a = _lift(a)
    return _make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def relu(x) -> Tensor:
    """Elementwise ``max(0, x)``; NaN propagates and the derivative at exactly zero is 0."""
    x = _lift(x)
    active = x.data > 0
    return _make(np.where(x.data < 0, 0.0, x.data).astype(x.dtype, copy=False), (x,),
                 lambda g: (g * active,))


def mask(x, m) -> Tensor:
    """Zero the entries of ``x`` where the 0/1 array ``m`` is 0."""
    x = _lift(x)
    m = _as_array(m, x.dtype)
    if m.shape != x.shape:
        raise DimensionError(f"mask: shape {m.shape} does not match input shape {x.shape}")
    return _make(x.data * m, (x,), lambda g: (g * m,))


def matmul(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul: operands must be at least 2-d, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions differ for {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul: cannot broadcast batch dims of {a.shape} and {b.shape}") from None

    def rule(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return (None if ga is None else _unbroadcast(ga, a.shape),
                None if gb is None else _unbroadcast(gb, b.shape))

    return _make(out, (a, b), rule)


def affine(x, W, b=None) -> Tensor:
    """Fully connected map ``x @ W (+ b)`` over the trailing axis.

    Raises:
        DimensionError: if the inner dimensions of ``x`` and ``W`` differ, or
            ``b`` does not match the output width.
    """
    x, W = _lift(x), _lift(W)
    if x.ndim < 1 or W.ndim != 2 or x.shape[-1] != W.shape[0]:
        raise DimensionError(f"affine: input shape {x.shape} incompatible with weight shape {W.shape}")
    y = matmul(x, W)
    if b is None:
        return y
    b = _lift(b)
    if b.shape != (W.shape[1],):
        raise DimensionError(f"affine: bias shape {b.shape} does not match weight shape {W.shape}")
    return add(y, b)


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _lift(x)
    axes = _norm_axis(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def rule(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(np.asarray(out), (x,), rule)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _lift(x)
    axes = _norm_axis(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return mul(tsum(x, axes, keepdims), 1.0 / count)


def reshape(x, shape) -> Tensor:
    x = _lift(x)
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None) -> Tensor:
    x = _lift(x)
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _make(np.ascontiguousarray(np.transpose(x.data, axes)), (x,),
                 lambda g: (np.transpose(g, inverse),))


def getitem(x, index) -> Tensor:
    x = _lift(x)

    def rule(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(np.ascontiguousarray(x.data[index]), (x,), rule)


def pad(x, pad_width) -> Tensor:
    """Zero-pad ``x``; ``pad_width`` follows :func:`numpy.pad` (one pair per axis)."""
    x = _lift(x)
    widths = [tuple(p) for p in pad_width]
    if len(widths) != x.ndim:
        raise DimensionError(f"pad: {len(widths)} pad pairs for a {x.ndim}-d tensor")
    if all(p == (0, 0) for p in widths):
        return x
    region = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, x.shape))
    return _make(np.pad(x.data, widths), (x,), lambda g: (g[region],))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [_lift(t) for t in tensors]
    ref = ts[0].shape
    axis = axis % len(ref)
    for t in ts[1:]:
        if len(t.shape) != len(ref) or any(a != b for i, (a, b) in enumerate(zip(t.shape, ref)) if i != axis):
            raise DimensionError(f"concat: shapes {ref} and {t.shape} differ off axis {axis}")
    bounds = np.cumsum([0] + [t.shape[axis] for t in ts])

    def rule(g):
        return tuple(np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:]))

    return _make(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), rule)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [_lift(t) for t in tensors]
    shapes = {t.shape for t in ts}
    if len(shapes) != 1:
        raise DimensionError(f"stack: tensors have differing shapes {sorted(shapes)}")

    def rule(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(ts)))

    return _make(np.stack([t.data for t in ts], axis=axis), tuple(ts), rule)


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack_.append((parent, False))
    return order


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Propagate d(loss)/d(node) to every node reachable from ``loss``.

    Gradients are recomputed from zero on each call. Returns a map from every
    reachable leaf tensor with ``requires_grad`` to its gradient.

    Raises:
        DimensionError: if ``loss`` is not a scalar.
    """
    if loss.size != 1:
        raise DimensionError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return {}
    order = _topological(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    leaves: dict[Tensor, np.ndarray] = {}
    for node in reversed(order):
        g = node.grad
        if g is None:
            g = node.grad = np.zeros_like(node.data)
        if node._rule is None:
            leaves[node] = g
            continue
        for parent, pg in zip(node._parents, node._rule(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.array(pg, dtype=parent.dtype, copy=True)
            else:
                parent.grad += pg
    return leaves


def parameter(data, dtype=None, name: str | None = None) -> Tensor:
    """A leaf tensor that tracks gradients."""
    return Tensor(data, requires_grad=True, dtype=dtype, name=name)

