"""Tape-based reverse-mode differentiation over float64 numpy arrays."""
from __future__ import annotations

import contextlib

import numpy as np

from . import kernels


class ShapeMismatch(ValueError):
    pass


class NonFiniteValue(FloatingPointError):
    pass


class NotScalar(ValueError):
    pass


_grad_enabled = True
_kink_trace = None  # list collecting piecewise-linear activation patterns, when set


@contextlib.contextmanager
def trace_kinks():
    """Record the active/inactive pattern of every ReLU-type op evaluated inside."""
    global _kink_trace
    prev = _kink_trace
    _kink_trace = []
    try:
        yield _kink_trace
    finally:
        _kink_trace = prev


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording backward closures."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _finite(arr, op):
    if not np.isfinite(arr).all():
        raise NonFiniteValue(f"non-finite value produced by {op}")
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op="leaf"):
        arr = np.asarray(data, dtype=np.float64)
        if op == "leaf":
            arr = np.array(arr, dtype=np.float64)  # own the buffer
            _finite(arr, "leaf")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self):
        backward(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn, op):
    _finite(data, op)
    track = _grad_enabled and any(p.requires_grad for p in parents)
    if not track:
        return Tensor(data, False, (), None, op)
    return Tensor(data, True, parents, backward_fn, op)


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from exc


# elementwise arithmetic

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    out = None

    def bw():
        _accum(a, _unbroadcast(out.grad, a.shape))
        _accum(b, _unbroadcast(out.grad, b.shape))

    out = _make(a.data + b.data, (a, b), bw, "add")
    return out


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    out = None

    def bw():
        _accum(a, _unbroadcast(out.grad, a.shape))
        _accum(b, _unbroadcast(-out.grad, b.shape))

    out = _make(a.data - b.data, (a, b), bw, "sub")
    return out


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    out = None

    def bw():
        _accum(a, _unbroadcast(out.grad * b.data, a.shape))
        _accum(b, _unbroadcast(out.grad * a.data, b.shape))

    out = _make(a.data * b.data, (a, b), bw, "mul")
    return out


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = None

    def bw():
        _accum(a, _unbroadcast(out.grad / b.data, a.shape))
        _accum(b, _unbroadcast(-out.grad * a.data / (b.data * b.data), b.shape))

    out = _make(a.data / b.data, (a, b), bw, "div")
    return out


def scale(a, c):
    a = as_tensor(a)
    c = float(c)
    out = None

    def bw():
        _accum(a, out.grad * c)

    out = _make(a.data * c, (a,), bw, "scale")
    return out


def square(a):
    a = as_tensor(a)
    out = None

    def bw():
        _accum(a, 2.0 * a.data * out.grad)

    out = _make(a.data * a.data, (a,), bw, "square")
    return out


def sqrt(a):
    a = as_tensor(a)
    out = None

    def bw():
        _accum(a, out.grad * 0.5 / out.data)

    out = _make(np.sqrt(a.data), (a,), bw, "sqrt")
    return out


def exp(a):
    a = as_tensor(a)
    out = None

    def bw():
        _accum(a, out.grad * out.data)

    out = _make(np.exp(a.data), (a,), bw, "exp")
    return out


def log(a):
    a = as_tensor(a)
    out = None

    def bw():
        _accum(a, out.grad / a.data)

    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.log(a.data)
    out = _make(val, (a,), bw, "log")
    return out


def tanh(a):
    a = as_tensor(a)
    out = None

    def bw():
        _accum(a, out.grad * (1.0 - out.data * out.data))

    out = _make(np.tanh(a.data), (a,), bw, "tanh")
    return out


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    if _kink_trace is not None:
        _kink_trace.append(mask.tobytes())
    out = None

    def bw():
        _accum(a, out.grad * mask)

    out = _make(np.where(mask, a.data, 0.0), (a,), bw, "relu")
    return out


def gelu(a):
    """Smooth ReLU variant (tanh approximation)."""
    a = as_tensor(a)
    c = np.sqrt(2.0 / np.pi)
    x = a.data
    inner = c * (x + 0.044715 * x ** 3)
    th = np.tanh(inner)
    out = None

    def bw():
        dinner = c * (1.0 + 3 * 0.044715 * x * x)
        _accum(a, out.grad * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner))

    out = _make(0.5 * x * (1.0 + th), (a,), bw, "gelu")
    return out


def leaky_relu(a, slope=0.2):
    a = as_tensor(a)
    factor = np.where(a.data > 0, 1.0, slope)
    if _kink_trace is not None:
        _kink_trace.append((a.data > 0).tobytes())
    out = None

    def bw():
        _accum(a, out.grad * factor)

    out = _make(a.data * factor, (a,), bw, "leaky_relu")
    return out


# linear algebra and shape

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0 or a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    out = None

    def bw():
        g = out.grad
        if b.ndim == 1:
            ga = np.multiply.outer(g, b.data) if a.ndim > 1 else g * b.data
            gb = np.tensordot(a.data, g, axes=(tuple(range(a.ndim - 1)), tuple(range(g.ndim))))
        elif a.ndim == 1:
            ga = b.data @ g
            gb = np.multiply.outer(a.data, g)
        else:
            ga = g @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ g
        _accum(a, _unbroadcast(ga, a.shape))
        _accum(b, _unbroadcast(gb, b.shape))

    out = _make(a.data @ b.data, (a, b), bw, "matmul")
    return out


def dot(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 1 or a.shape != b.shape:
        raise ShapeMismatch(f"dot: {a.shape} . {b.shape}")
    return matmul(a, b)


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    out = None

    def bw():
        _accum(a, np.transpose(out.grad, inv))

    out = _make(np.transpose(a.data, axes), (a,), bw, "transpose")
    return out


def reshape(a, shape):
    a = as_tensor(a)
    try:
        val = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeMismatch(f"reshape: {a.shape} -> {shape}") from exc
    out = None

    def bw():
        _accum(a, out.grad.reshape(a.shape))

    out = _make(val, (a,), bw, "reshape")
    return out


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        val = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(f"concat: {[t.shape for t in tensors]} on axis {axis}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    out = None

    def bw():
        for t, g in zip(tensors, np.split(out.grad, bounds, axis=axis)):
            _accum(t, g)

    out = _make(val, tuple(tensors), bw, "concat")
    return out


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


def index(a, key):
    """Differentiable ``a[key]``; repeated fancy indices accumulate."""
    a = as_tensor(a)
    out = None

    def bw():
        g = np.zeros_like(a.data)
        np.add.at(g, key, out.grad)
        _accum(a, g)

    out = _make(np.array(a.data[key]), (a,), bw, "index")
    return out


def take_rows(a, idx):
    """Gather rows of a 2-D tensor; the backward pass is a segment scatter."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    out = None

    def bw():
        g = out.grad.reshape(len(idx), -1)
        _accum(a, kernels.scatter_add_rows(g, idx, a.shape[0]).reshape(a.shape))

    out = _make(a.data[idx], (a,), bw, "take_rows")
    return out


def segment_sum(a, seg, n):
    """Sum rows of ``a`` into ``n`` segments given by ``seg``."""
    a = as_tensor(a)
    seg = np.asarray(seg, dtype=np.int64)
    if a.ndim != 2 or a.shape[0] != len(seg):
        raise ShapeMismatch(f"segment_sum: rows {a.shape} vs {len(seg)} ids")
    out = None

    def bw():
        _accum(a, out.grad[seg])

    out = _make(kernels.scatter_add_rows(a.data, seg, n), (a,), bw, "segment_sum")
    return out


def segment_softmax(scores, seg, n):
    """Softmax of a 1-D score vector within each segment."""
    scores = as_tensor(scores)
    seg = np.asarray(seg, dtype=np.int64)
    if scores.ndim != 1 or scores.shape[0] != len(seg):
        raise ShapeMismatch("segment_softmax expects 1-D scores aligned with segment ids")
    val = kernels.segment_softmax(scores.data, seg, n)
    out = None

    def bw():
        gy = out.grad * out.data
        tot = kernels.scatter_add_rows(gy[:, None], seg, n)[:, 0]
        _accum(scores, gy - out.data * tot[seg])

    out = _make(val, (scores,), bw, "segment_softmax")
    return out


# reductions

def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    out = None

    def bw():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.shape))

    out = _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), bw, "sum")
    return out


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum(a, axis, keepdims), 1.0 / n)


def softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    ex = np.exp(shifted)
    val = ex / ex.sum(axis=axis, keepdims=True)
    out = None

    def bw():
        gy = out.grad * out.data
        _accum(a, gy - out.data * gy.sum(axis=axis, keepdims=True))

    out = _make(val, (a,), bw, "softmax")
    return out


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    val = shifted - lse
    out = None

    def bw():
        p = np.exp(out.data)
        _accum(a, out.grad - p * out.grad.sum(axis=axis, keepdims=True))

    out = _make(val, (a,), bw, "log_softmax")
    return out


def layer_normalize(a, eps=1e-5):
    """Zero-mean, unit-variance normalization over the last axis (no affine)."""
    a = as_tensor(a)
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    val = xc * inv
    out = None

    def bw():
        g = out.grad
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * val).mean(axis=-1, keepdims=True)
        _accum(a, inv * (g - gm - val * gx))

    out = _make(val, (a,), bw, "layer_normalize")
    return out


def backward(loss):
    """Fill ``.grad`` on every tensor reachable from scalar ``loss``."""
    if loss.size != 1:
        raise NotScalar(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = []
    seen = set()
    stack_ = [(loss, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward()
            if node is not loss:
                # intermediate buffers are not needed past this point
                node.grad = None
    for node in order:
        if node._backward is not None:
            node._parents = ()
            node._backward = None

