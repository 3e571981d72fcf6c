"""Minimal dense-tensor layer with reverse-mode differentiation.

Tensors wrap contiguous numpy float32 (or float64, for gradient checking) arrays.
Video data uses the rank-5 layout (batch, time, height, width, channel), row-major
with channel innermost. Every operation is a pure function of its inputs; results
never alias input buffers. Gradients accumulate into per-tensor ``grad`` buffers
during ``backward()``.
"""

import weakref

import numpy as np

from .errors import NumericError, ShapeError

_grad_enabled = True

# Live/peak byte counters for the allocation-tracking harness. Updated on every
# Tensor creation and (via weakref finalizers) destruction.
_live_bytes = 0
_peak_bytes = 0


def _on_alloc(nbytes: int) -> None:
    global _live_bytes, _peak_bytes
    _live_bytes += nbytes
    if _live_bytes > _peak_bytes:
        _peak_bytes = _live_bytes


def _on_free(nbytes: int) -> None:
    global _live_bytes
    _live_bytes -= nbytes


class MemoryTracker:
    """Context manager reporting the peak tensor bytes allocated on top of what was
    already live at entry. Relies on CPython refcounting to free dead tensors."""

    def __init__(self) -> None:
        self.baseline = 0
        self.peak_delta = 0

    def __enter__(self) -> "MemoryTracker":
        global _peak_bytes
        self.baseline = _live_bytes
        _peak_bytes = _live_bytes
        return self

    def __exit__(self, *exc) -> None:
        self.peak_delta = _peak_bytes - self.baseline


class no_grad:
    """Disable graph recording inside the block (forwards only)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A dense array plus an optional gradient slot and graph linkage.

    ``data`` is always contiguous float32/float64. ``grad``, when materialized,
    has the same shape and dtype as ``data``.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        arr = np.asarray(data)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad and _grad_enabled
        self.grad = None
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None
        nbytes = arr.nbytes
        _on_alloc(nbytes)
        weakref.finalize(self, _on_free, nbytes)

    # -- introspection ------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # -- graph --------------------------------------------------------------

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Reverse-mode pass from a scalar root; accumulates into ``grad`` slots."""
        if self.data.size != 1:
            raise ShapeError(f"backward() requires a scalar root, got shape {self.shape}")
        if not self.requires_grad:
            return
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operators ----------------------------------------------------------

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
        return mul(self, -1.0)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else np.float32
    return Tensor(np.asarray(x, dtype=dtype))


def check_finite(x: Tensor, where: str) -> Tensor:
    if not np.all(np.isfinite(x.data)):
        raise NumericError(f"non-finite values in {where}")
    return x


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(a, b, fwd, da, db) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    out_data = fwd(a.data, b.data)
    req = a.requires_grad or b.requires_grad

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(da(g, a.data, b.data), a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(db(g, a.data, b.data), b.data.shape))

    return Tensor(out_data, requires_grad=req, _parents=(a, b), _backward=backward)


def add(a, b) -> Tensor:
    return _binary(a, b, lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Tensor:
    return _binary(a, b, lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b) -> Tensor:
    return _binary(a, b, lambda x, y: x * y, lambda g, x, y: g * y, lambda g, x, y: g * x)


def _unary(x: Tensor, out_data: np.ndarray, grad_fn) -> Tensor:
    def backward(g):
        x._accumulate(grad_fn(g))

    return Tensor(out_data, requires_grad=x.requires_grad, _parents=(x,), _backward=backward)


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _unary(x, y, lambda g: g * y)


def square(x: Tensor) -> Tensor:
    xd = x.data
    return _unary(x, xd * xd, lambda g: g * (2.0 * xd))


def absolute(x: Tensor) -> Tensor:
    xd = x.data
    return _unary(x, np.abs(xd), lambda g: g * np.sign(xd))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _unary(x, np.where(mask, x.data, 0.0), lambda g: g * mask)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = x.data > 0
    y = np.where(mask, x.data, slope * x.data)
    return _unary(x, y, lambda g: g * np.where(mask, 1.0, slope))


def silu(x: Tensor) -> Tensor:
    sig = 1.0 / (1.0 + np.exp(-x.data))
    y = x.data * sig
    return _unary(x, y, lambda g: g * (sig * (1.0 + x.data * (1.0 - sig))))


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    mask = (x.data >= lo) & (x.data <= hi)
    return _unary(x, np.clip(x.data, lo, hi), lambda g: g * mask)


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    return _unary(x, np.asarray(x.data.mean(), dtype=x.dtype), lambda g: np.full_like(x.data, g / n))


def sum_all(x: Tensor) -> Tensor:
    return _unary(x, np.asarray(x.data.sum(), dtype=x.dtype), lambda g: np.full_like(x.data, g))


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis; backward scatters into a zero buffer."""
    if start < 0 or start + length > x.shape[axis]:
        raise ShapeError(f"narrow range [{start}, {start + length}) exceeds axis {axis} of {x.shape}")
    idx = tuple(slice(None) if i != axis else slice(start, start + length) for i in range(x.data.ndim))

    def backward(g):
        full = np.zeros_like(x.data)
        full[idx] = g
        x._accumulate(full)

    return Tensor(x.data[idx].copy(), requires_grad=x.requires_grad, _parents=(x,), _backward=backward)


def mse(a: Tensor, b) -> Tensor:
    """Mean squared error over all elements."""
    return mean_all(square(sub(a, b)))


def l1(a: Tensor, b) -> Tensor:
    """Mean absolute error over all elements."""
    return mean_all(absolute(sub(a, b)))


def live_bytes() -> int:
    return _live_bytes
