"""Dense float tensors with a reverse-mode gradient tape.

Design points:
  * row-major contiguous buffers; slicing copies, so no tape entry ever
    aliases a buffer that the optimizer may later mutate in place
  * one tape per thread; backward() walks it in exact reverse order and
    then resets it
  * strict mode (default) raises NumericError on any non-finite
    intermediate; permissive mode is available for exploratory runs
  * float32 by default, float64 supported for high-precision gradient
    checks; dtypes never mix silently

Hot row-wise kernels (layer_norm, softmax, gelu) are dispatched through the
compiled backend; matrix products stay in BLAS via numpy.
"""

import threading

import numpy as np

from .. import _kernels as K
from ..errors import NumericError, ShapeError

_local = threading.local()


def _state():
    if not hasattr(_local, "tape"):
        _local.tape = []
        _local.grad_enabled = True
        _local.strict = True
    return _local


class no_grad:
    """Context manager: ops run inside record nothing on the tape."""

    def __enter__(self):
        st = _state()
        self._prev = st.grad_enabled
        st.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _state().grad_enabled = self._prev
        return False


class strict_mode:
    """Context manager toggling the non-finite check on op outputs."""

    def __init__(self, enabled):
        self.enabled = enabled

    def __enter__(self):
        st = _state()
        self._prev = st.strict
        st.strict = self.enabled
        return self

    def __exit__(self, *exc):
        _state().strict = self._prev
        return False


def set_strict(enabled):
    _state().strict = bool(enabled)


def tape_size():
    return len(_state().tape)


def reset_tape():
    _state().tape.clear()


class Node:
    __slots__ = ("out", "inputs", "bwd")

    def __init__(self, out, inputs, bwd):
        self.out = out
        self.inputs = inputs
        self.bwd = bwd


class Tensor:
    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        if _state().strict and not np.all(np.isfinite(self.data)):
            raise NumericError("tensor: non-finite input data")

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(()))

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}{flag})"

    # ------------------------------------------------------------- operators
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

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return pow_(self, p)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, key):
        return slice_(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def tensor(data, requires_grad=False, dtype=None):
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def zeros(shape, dtype=np.float32, requires_grad=False):
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else np.float32
    return Tensor(np.asarray(x, dtype=dtype))


def _check_dtypes(op, *tensors):
    dt = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dt:
            raise TypeError(f"{op}: mixed dtypes {dt} and {t.data.dtype}")
    return dt


def _record(out_data, inputs, bwd, op):
    st = _state()
    if st.strict and not np.all(np.isfinite(out_data)):
        raise NumericError(f"{op}: non-finite result")
    req = st.grad_enabled and any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.requires_grad = req
    out.grad = None
    if req:
        st.tape.append(Node(out, inputs, bwd))
    return out


def _accumulate(t, g):
    if g.dtype != t.data.dtype:
        g = g.astype(t.data.dtype)
    if t.grad is None:
        t.grad = g.copy() if g.base is not None or g is t.data else g
    else:
        t.grad = t.grad + g


def backward(loss):
    """Reverse-mode sweep from a scalar loss; resets the tape afterwards."""
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.data.size != 1:
        raise ShapeError("backward: loss must be scalar", loss.shape)
    if not loss.requires_grad:
        raise ValueError("backward: loss does not require grad")
    st = _state()
    tape = st.tape
    if not tape:
        raise ValueError("backward: empty tape")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape):
        og = node.out.grad
        if og is None:
            continue
        grads = node.bwd(og)
        for t, g in zip(node.inputs, grads):
            if g is not None and t.requires_grad:
                _accumulate(t, g)
    if st.strict:
        for node in tape:
            for t in node.inputs:
                if t.requires_grad and t.grad is not None and not np.all(np.isfinite(t.grad)):
                    raise NumericError("backward: non-finite gradient")
    tape.clear()


# ------------------------------------------------------------ broadcasting

def _unbroadcast(g, shape):
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# ------------------------------------------------------------ arithmetic ops

def add(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_dtypes("add", a, b)
    _broadcast_shape("add", a, b)
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(out, (a, b), bwd, "add")


def sub(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_dtypes("sub", a, b)
    _broadcast_shape("sub", a, b)
    out = a.data - b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(out, (a, b), bwd, "sub")


def mul(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_dtypes("mul", a, b)
    _broadcast_shape("mul", a, b)
    out = a.data * b.data

    def bwd(g):
        return (_unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape))

    return _record(out, (a, b), bwd, "mul")


def div(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_dtypes("div", a, b)
    _broadcast_shape("div", a, b)
    out = a.data / b.data

    def bwd(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _record(out, (a, b), bwd, "div")


def matmul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b)
    _check_dtypes("matmul", a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    out = np.matmul(a.data, b.data)

    def bwd(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(out, (a, b), bwd, "matmul")


def exp(a):
    a = _as_tensor(a)
    out = np.exp(a.data)

    def bwd(g):
        return (g * out,)

    return _record(out, (a,), bwd, "exp")


def log(a):
    a = _as_tensor(a)
    out = np.log(a.data)

    def bwd(g):
        return (g / a.data,)

    return _record(out, (a,), bwd, "log")


def pow_(a, p):
    a = _as_tensor(a)
    p = float(p)
    out = a.data ** p

    def bwd(g):
        return (g * p * a.data ** (p - 1.0),)

    return _record(out, (a,), bwd, "pow")


def sqrt(a):
    return pow_(a, 0.5)


# -------------------------------------------------------------- reductions

def sum_(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    out = np.asarray(out, dtype=a.data.dtype)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g.reshape((1,) * a.ndim), a.shape),)
        ax = axis if isinstance(axis, tuple) else (axis,)
        gg = g
        if not keepdims:
            gg = np.expand_dims(g, ax)
        return (np.broadcast_to(gg, a.shape),)

    return _record(out, (a,), bwd, "sum")


def mean(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    if axis is None:
        n = a.size
    else:
        ax = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for i in ax:
            n *= a.shape[i]
    return mul(sum_(a, axis, keepdims), 1.0 / n)


# ------------------------------------------------------------- shape moves

def reshape(a, shape):
    a = _as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, shape) from None
    out = np.ascontiguousarray(out)

    def bwd(g):
        return (g.reshape(a.shape),)

    return _record(out, (a,), bwd, "reshape")


def transpose(a, axes=None):
    a = _as_tensor(a)
    out = np.ascontiguousarray(np.transpose(a.data, axes))
    if axes is None:
        inv = None
    else:
        inv = tuple(np.argsort(axes))

    def bwd(g):
        return (np.ascontiguousarray(np.transpose(g, inv)),)

    return _record(out, (a,), bwd, "transpose")


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    _check_dtypes("concat", *tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _record(out, tuple(tensors), bwd, "concat")


def slice_(a, key):
    a = _as_tensor(a)
    out = np.ascontiguousarray(a.data[key])

    def bwd(g):
        full = np.zeros_like(a.data)
        full[key] = g.reshape(full[key].shape)
        return (full,)

    return _record(out, (a,), bwd, "slice")


def take(a, indices, axis=0):
    """Row gather along an axis; backward scatter-adds."""
    a = _as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    out = np.ascontiguousarray(np.take(a.data, idx, axis=axis))

    def bwd(g):
        full = np.zeros_like(a.data)
        if axis == 0:
            np.add.at(full, idx, g)
        else:
            sl = [slice(None)] * a.ndim
            sl[axis] = idx
            np.add.at(full, tuple(sl), g)
        return (full,)

    return _record(out, (a,), bwd, "take")


# ------------------------------------------------------- fused dense kernels

def softmax(a, axis=-1):
    a = _as_tensor(a)
    if axis in (-1, a.ndim - 1):
        d = a.shape[-1]
        y = K.softmax_fwd(a.data.reshape(-1, d)).reshape(a.shape)
    else:
        z = a.data - a.data.max(axis=axis, keepdims=True)
        y = np.exp(z)
        y /= y.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _record(y, (a,), bwd, "softmax")


def log_softmax(a, axis=-1):
    a = _as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    z = a.data - m
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def bwd(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _record(out, (a,), bwd, "log_softmax")


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize over the last axis, then scale and shift."""
    x = _as_tensor(x)
    gamma = _as_tensor(gamma, x)
    beta = _as_tensor(beta, x)
    _check_dtypes("layer_norm", x, gamma, beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError("layer_norm", x.shape, gamma.shape)
    x2 = x.data.reshape(-1, d)
    y, mu, rstd = K.layer_norm_fwd(x2, gamma.data, beta.data, eps)

    def bwd(g):
        gx, ggamma, gbeta = K.layer_norm_bwd(
            np.ascontiguousarray(g.reshape(-1, d)), x2, gamma.data, mu, rstd)
        return gx.reshape(x.shape), ggamma, gbeta

    return _record(y.reshape(x.shape), (x, gamma, beta), bwd, "layer_norm")


def gelu(a):
    a = _as_tensor(a)
    flat = a.data.reshape(-1)
    y = K.gelu_fwd(flat).reshape(a.shape)

    def bwd(g):
        return (K.gelu_bwd(np.ascontiguousarray(g.reshape(-1)), flat).reshape(a.shape),)

    return _record(y, (a,), bwd, "gelu")


def l2_normalize(a, axis=-1, eps=1e-12):
    """Scale slices along `axis` to unit L2 norm (smoothed near zero)."""
    a = _as_tensor(a)
    n = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True) + eps * eps)
    y = a.data / n

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((g - y * dot) / n,)

    return _record(y, (a,), bwd, "l2_normalize")
