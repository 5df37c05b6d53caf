"""Dense arrays with reverse-mode gradient propagation.

A ``Tensor`` wraps a numpy array and remembers the operation that produced
it. Calling ``backward()`` on a scalar tensor walks the recorded graph in
reverse topological order and accumulates ``.grad`` on every tensor that
requires it. Graphs are built eagerly (define-by-run); ``Graph`` offers the
named-input forward/backward contract on top of that.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Incompatible operand dims for an op. ``node`` names the offender."""

    def __init__(self, node: str, message: str):
        super().__init__(f"{node}: {message}")
        self.node = node


class GraphError(RuntimeError):
    pass


def _as_array(data, dtype=None) -> np.ndarray:
    if isinstance(data, np.ndarray) and data.dtype.kind == "f":
        arr = data if dtype is None else data.astype(dtype, copy=False)
    else:
        arr = np.asarray(data, dtype=dtype or DEFAULT_DTYPE)
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- introspection -------------------------------------------------
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
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def label(self) -> str:
        return self.name or self.op

    def __repr__(self) -> str:
        return f"Tensor({self.label()}, shape={self.shape}, dtype={self.dtype})"

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, name=self.name)

    # -- graph traversal -----------------------------------------------
    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        if self.size != 1:
            raise GraphError(f"backward needs a scalar root, got shape {self.shape}")
        order = _topological_order(self)
        for t in order:
            if t is not self and t._backward is not None:
                t.grad = None
        self.grad = np.ones_like(self.data)
        for t in reversed(order):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)

    # -- operator sugar --------------------------------------------------
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

    def __getitem__(self, index):
        return take(self, index)


def _topological_order(root: Tensor) -> list[Tensor]:
    # iterative DFS; recursion depth would be hit on long recurrent graphs
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if dtype is None and not isinstance(x, np.ndarray):
        dtype = DEFAULT_DTYPE
    return Tensor(np.asarray(x, dtype=dtype) if dtype is not None else x)


def _result_dtype(*tensors: Tensor):
    return np.result_type(*[t.data.dtype for t in tensors])


def _make(data: np.ndarray, op: str, parents: Sequence[Tensor], backward) -> Tensor:
    # 0-d arithmetic yields numpy scalars; keep their dtype rather than recasting
    out = Tensor(np.asarray(data))
    out.op = op
    live = tuple(p for p in parents if p.requires_grad)
    if live:
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}({a.label()}, {b.label()})", f"cannot broadcast {a.shape} with {b.shape}") from None


# -- elementwise binary --------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    _broadcast_check("add", a, b)
    dt = _result_dtype(a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make((a.data + b.data).astype(dt, copy=False), "add", (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    _broadcast_check("sub", a, b)
    dt = _result_dtype(a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make((a.data - b.data).astype(dt, copy=False), "sub", (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    _broadcast_check("multiply", a, b)
    dt = _result_dtype(a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make((a.data * b.data).astype(dt, copy=False), "multiply", (a, b), backward)


def _coerce_pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    else:
        a, b = as_tensor(a), as_tensor(b)
    return a, b


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    node = f"matmul({a.label()}, {b.label()})"
    if a.ndim == 0 or b.ndim == 0 or b.ndim > 2:
        raise ShapeError(node, f"unsupported ranks {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(node, f"inner dims differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward(g):
        if a.ndim == 1:
            ga = b.data @ g
            gb = np.outer(a.data, g) if b.ndim == 2 else a.data * g
        elif b.ndim == 1:
            ga = g[..., None] * b.data
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1)
        else:
            ga = g @ b.data.T
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, b.shape[1])
        if a.requires_grad:
            a._accumulate(ga)
        if b.requires_grad:
            b._accumulate(gb)

    return _make(out, "matmul", (a, b), backward)


# -- elementwise unary ---------------------------------------------------------

def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)

    def backward(g):
        x._accumulate(g * (1.0 - y * y))

    return _make(y, "tanh", (x,), backward)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # split by sign so exp never overflows
    d = x.data
    y = np.empty_like(d)
    pos = d >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    y[~pos] = e / (1.0 + e)

    def backward(g):
        x._accumulate(g * y * (1.0 - y))

    return _make(y, "sigmoid", (x,), backward)


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)

    def backward(g):
        x._accumulate(g * y)

    return _make(y, "exp", (x,), backward)


def log(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise ShapeError(f"log({x.label()})", "non-positive input")
    y = np.log(x.data)

    def backward(g):
        x._accumulate(g / x.data)

    return _make(y, "log", (x,), backward)


def power(x, p: float) -> Tensor:
    x = as_tensor(x)
    y = np.power(x.data, p).astype(x.dtype, copy=False)

    def backward(g):
        x._accumulate(g * p * np.power(x.data, p - 1))

    return _make(y, "power", (x,), backward)


# -- normalisers ---------------------------------------------------------------

def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        x._accumulate(y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _make(y, "softmax", (x,), backward)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    sm = np.exp(y)

    def backward(g):
        x._accumulate(g - sm * g.sum(axis=axis, keepdims=True))

    return _make(y, "log_softmax", (x,), backward)


# -- reductions (64-bit accumulation) ------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def _expand(g: np.ndarray, shape, axes) -> np.ndarray:
    for ax in sorted(axes):
        g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def sum(x, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    y = x.data.sum(axis=axes, dtype=np.float64).astype(x.dtype)

    def backward(g):
        x._accumulate(_expand(g, x.shape, axes))

    return _make(np.asarray(y), "sum", (x,), backward)


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    n = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    y = x.data.mean(axis=axes, dtype=np.float64).astype(x.dtype)

    def backward(g):
        x._accumulate(_expand(g, x.shape, axes) / n)

    return _make(np.asarray(y), "mean", (x,), backward)


def sum_squares(x, axis=None) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    d64 = x.data.astype(np.float64)
    y = (d64 * d64).sum(axis=axes).astype(x.dtype)

    def backward(g):
        x._accumulate(2.0 * x.data * _expand(g, x.shape, axes))

    return _make(np.asarray(y), "sum_squares", (x,), backward)


# -- layout --------------------------------------------------------------------

def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat", "no inputs")
    ax = axis % ts[0].ndim
    for t in ts[1:]:
        if t.ndim != ts[0].ndim or any(
            t.shape[i] != ts[0].shape[i] for i in range(t.ndim) if i != ax
        ):
            raise ShapeError(f"concat({t.label()})", f"shape {t.shape} incompatible with {ts[0].shape} on axis {ax}")
    y = np.concatenate([t.data for t in ts], axis=ax)
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def backward(g):
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[ax] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return _make(y, "concat", ts, backward)


def _is_basic(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int, np.integer)) or i is None or i is Ellipsis for i in items)


def take(x, index) -> Tensor:
    """Slice or gather; the backward pass scatters into a zero array."""
    x = as_tensor(x)
    try:
        y = x.data[index]
    except IndexError as exc:
        raise ShapeError(f"slice({x.label()})", str(exc)) from None
    basic = _is_basic(index)
    y = np.array(y, copy=True)

    def backward(g):
        full = np.zeros_like(x.data)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        x._accumulate(full)

    return _make(y, "slice", (x,), backward)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        y = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape({x.label()})", str(exc)) from None

    def backward(g):
        x._accumulate(g.reshape(x.shape))

    return _make(y, "reshape", (x,), backward)


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    y = np.transpose(x.data, axes)
    inv = None if axes is None else np.argsort(axes)

    def backward(g):
        x._accumulate(np.transpose(g, inv))

    return _make(y, "transpose", (x,), backward)


def unfold2d(x, kernel: int, stride: int = 1, pad: int = 0) -> Tensor:
    """im2col for NHWC input: (B, H, W, C) -> (B, Ho, Wo, kernel*kernel*C).

    The trailing axis is ordered (dy, dx, c), matching a weight matrix of
    shape (kernel*kernel*C, C_out).
    """
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"unfold2d({x.label()})", f"expected NHWC, got {x.shape}")
    B, H, W, C = x.shape
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x.data
    Ho = (H + 2 * pad - kernel) // stride + 1
    Wo = (W + 2 * pad - kernel) // stride + 1
    if Ho <= 0 or Wo <= 0:
        raise ShapeError(f"unfold2d({x.label()})", f"kernel {kernel} larger than padded input {x.shape}")
    cols = np.empty((B, Ho, Wo, kernel, kernel, C), dtype=x.dtype)
    for dy in range(kernel):
        for dx in range(kernel):
            cols[:, :, :, dy, dx, :] = xp[:, dy:dy + stride * Ho:stride, dx:dx + stride * Wo:stride, :]
    y = cols.reshape(B, Ho, Wo, kernel * kernel * C)

    def backward(g):
        g6 = g.reshape(B, Ho, Wo, kernel, kernel, C)
        gp = np.zeros((B, H + 2 * pad, W + 2 * pad, C), dtype=x.dtype)
        for dy in range(kernel):
            for dx in range(kernel):
                gp[:, dy:dy + stride * Ho:stride, dx:dx + stride * Wo:stride, :] += g6[:, :, :, dy, dx, :]
        x._accumulate(gp[:, pad:pad + H, pad:pad + W, :] if pad else gp)

    return _make(y, "unfold2d", (x,), backward)


# -- named-input graphs --------------------------------------------------------

class Graph:
    """A computation over named inputs with cached forward state.

    ``build`` receives one keyword ``Tensor`` per named input and returns the
    root tensor. ``forward`` evaluates it; ``backward`` then returns the
    gradient of the (scalar) root with respect to every named input and every
    named parameter leaf reached by the graph.
    """

    def __init__(self, build: Callable[..., Tensor]):
        self.build = build
        self.root: Tensor | None = None
        self._inputs: dict[str, Tensor] = {}

    def forward(self, **inputs) -> np.ndarray:
        self._inputs = {k: Tensor(v, requires_grad=True, name=k) for k, v in inputs.items()}
        try:
            self.root = self.build(**self._inputs)
        except TypeError as exc:
            raise GraphError(f"graph inputs not bound: {exc}") from None
        return self.root.data

    def backward(self) -> dict[str, np.ndarray]:
        if self.root is None:
            raise GraphError("backward called before forward")
        self.root.backward()
        grads = {}
        for t in _topological_order(self.root):
            if t.op == "leaf" and t.requires_grad and t.name is not None:
                grads[t.name] = t.grad if t.grad is not None else np.zeros_like(t.data)
        return grads
