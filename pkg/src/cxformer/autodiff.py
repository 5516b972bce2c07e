"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A ``Tensor`` wraps a numpy array. Operations executed inside a ``with Tape()``
block append nodes to the tape; ``backward`` replays the tape in reverse and
accumulates vector-Jacobian products into ``Tensor.grad``. Tapes are rebuilt
on every forward pass (define-by-run), so Python control flow needs no
special handling.

Broadcasting is deliberately restricted: an op either sees equal shapes, a
scalar against a tensor, or a lower-rank operand whose shape equals the
trailing dimensions of the other (leading batch axes). Anything else raises
``ShapeError``. Keepdims-style expansion is the explicit ``expand`` op.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

_STACK = threading.local()


def _active_tape():
    stack = getattr(_STACK, "tapes", None)
    return stack[-1] if stack else None


class Tape:
    """Records operations for one forward pass."""

    def __init__(self):
        self._nodes = []

    def __enter__(self):
        stack = getattr(_STACK, "tapes", None)
        if stack is None:
            stack = _STACK.tapes = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _STACK.tapes.pop()
        return False

    def __len__(self):
        return len(self._nodes)


class Tensor:
    """Dense float64 array plus gradient slot."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out, pairs):
    tape = _active_tape()
    if tape is None:
        return out
    sources = [(t, vjp) for t, vjp in pairs if t.requires_grad]
    if sources:
        out.requires_grad = True
        tape._nodes.append((out, sources))
    return out


def _check_aligned(a_shape, b_shape, opname):
    if a_shape == b_shape or a_shape == () or b_shape == ():
        return
    la, lb = len(a_shape), len(b_shape)
    if lb < la and a_shape[la - lb:] == b_shape:
        return
    if la < lb and b_shape[lb - la:] == a_shape:
        return
    raise ShapeError(
        f"{opname}: shapes {a_shape} and {b_shape} do not align "
        "(only scalar or trailing-aligned broadcast is supported)"
    )


def _unbroadcast(g, shape):
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    return g.reshape(shape)


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_aligned(a.shape, b.shape, "add")
    out = Tensor(a.data + b.data)
    return _record(out, [
        (a, lambda g: _unbroadcast(g, a.shape)),
        (b, lambda g: _unbroadcast(g, b.shape)),
    ])


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_aligned(a.shape, b.shape, "sub")
    out = Tensor(a.data - b.data)
    return _record(out, [
        (a, lambda g: _unbroadcast(g, a.shape)),
        (b, lambda g: _unbroadcast(-g, b.shape)),
    ])


def mul(a, b):
    """Elementwise (Hadamard) product."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_aligned(a.shape, b.shape, "mul")
    out = Tensor(a.data * b.data)
    return _record(out, [
        (a, lambda g: _unbroadcast(g * b.data, a.shape)),
        (b, lambda g: _unbroadcast(g * a.data, b.shape)),
    ])


def scale(x, c):
    x, c = _as_tensor(x), float(c)
    out = Tensor(x.data * c)
    return _record(out, [(x, lambda g: g * c)])


def neg(x):
    x = _as_tensor(x)
    out = Tensor(-x.data)
    return _record(out, [(x, lambda g: -g)])


def relu(x):
    x = _as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0))
    mask = x.data > 0.0  # derivative at exactly 0 is defined as 0
    return _record(out, [(x, lambda g: g * mask)])


def softplus(x):
    """log(1 + exp(x)), computed without overflow for large |x|."""
    x = _as_tensor(x)
    out = Tensor(np.logaddexp(0.0, x.data))
    sig = _sigmoid(x.data)
    return _record(out, [(x, lambda g: g * sig)])


def _sigmoid(z):
    pos = z >= 0
    out = np.empty_like(z)
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def exp(x):
    x = _as_tensor(x)
    out = Tensor(np.exp(x.data))
    return _record(out, [(x, lambda g: g * out.data)])


def power(x, p):
    """Elementwise x**p for a constant float p. Caller guards the domain."""
    x, p = _as_tensor(x), float(p)
    out = Tensor(x.data ** p)
    return _record(out, [(x, lambda g: g * p * x.data ** (p - 1.0))])


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-d, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ for {a.shape} @ {b.shape}")
    if a.ndim != b.ndim:
        if min(a.ndim, b.ndim) != 2:
            raise ShapeError(
                f"matmul: batched operands must share leading dimensions, got {a.shape} @ {b.shape}"
            )
    elif a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dimensions differ for {a.shape} @ {b.shape}")
    out = Tensor(np.matmul(a.data, b.data))
    return _record(out, [
        (a, lambda g: _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)),
        (b, lambda g: _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)),
    ])


def reduce_sum(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))

    def gx(g):
        if axis is None:
            return np.full(x.shape, g.reshape(()))
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, x.shape).copy()

    return _record(out, [(x, gx)])


def mean(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    n = x.size if axis is None else x.shape[axis]
    if n == 0:
        raise ShapeError("mean: cannot average over an empty axis")
    return scale(reduce_sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def _extreme(x, axis, keepdims, reducer, arg_reducer, name):
    x = _as_tensor(x)
    ax = axis if axis >= 0 else axis + x.ndim
    if not 0 <= ax < x.ndim:
        raise ShapeError(f"{name}: axis {axis} out of range for shape {x.shape}")
    if x.shape[ax] == 0:
        raise ShapeError(f"{name}: axis {axis} of shape {x.shape} is empty")
    out = Tensor(reducer(x.data, axis=ax, keepdims=keepdims))
    idx = arg_reducer(x.data, axis=ax)  # ties route to the lowest index

    def gx(g):
        gg = g if keepdims else np.expand_dims(g, ax)
        full = np.zeros_like(x.data)
        np.put_along_axis(full, np.expand_dims(idx, ax), gg, ax)
        return full

    return _record(out, [(x, gx)])


def reduce_min(x, axis, keepdims=False):
    return _extreme(x, axis, keepdims, np.min, np.argmin, "reduce_min")


def reduce_max(x, axis, keepdims=False):
    return _extreme(x, axis, keepdims, np.max, np.argmax, "reduce_max")


def expand(x, axis, n):
    """Repeat a size-1 axis n times. Gradient sums back over that axis."""
    x = _as_tensor(x)
    ax = axis if axis >= 0 else axis + x.ndim
    if not 0 <= ax < x.ndim or x.shape[ax] != 1:
        raise ShapeError(f"expand: axis {axis} of shape {x.shape} must have size 1")
    out = Tensor(np.repeat(x.data, n, axis=ax))
    return _record(out, [(x, lambda g: g.sum(axis=ax, keepdims=True))])


def reshape(x, shape):
    x = _as_tensor(x)
    out = Tensor(x.data.reshape(shape))
    return _record(out, [(x, lambda g: g.reshape(x.shape))])


def swapaxes(x, ax1, ax2):
    x = _as_tensor(x)
    out = Tensor(np.swapaxes(x.data, ax1, ax2))
    return _record(out, [(x, lambda g: np.swapaxes(g, ax1, ax2))])


def concat(tensors, axis):
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: need at least one tensor")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    pairs = []
    offset = 0
    for t in tensors:
        start, stop = offset, offset + t.shape[axis]
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(start, stop)
        pairs.append((t, lambda g, sl=tuple(sl): g[sl]))
        offset = stop
    return _record(out, pairs)


def slice_axis(x, axis, start, stop, step=1):
    x = _as_tensor(x)
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(start, stop, step)
    sl = tuple(sl)
    out = Tensor(x.data[sl])

    def gx(g):
        full = np.zeros_like(x.data)
        full[sl] = g
        return full

    return _record(out, [(x, gx)])


def logsumexp(x, keepdims=False):
    """log-sum-exp over the last axis, shifted by the row max for stability."""
    x = _as_tensor(x)
    m = x.data.max(axis=-1, keepdims=True)
    out_keep = m + np.log(np.exp(x.data - m).sum(axis=-1, keepdims=True))
    out = Tensor(out_keep if keepdims else out_keep[..., 0])
    soft = np.exp(x.data - out_keep)

    def gx(g):
        gg = g if keepdims else g[..., None]
        return gg * soft

    return _record(out, [(x, gx)])


def dropout(x, rate, training, rng):
    """Inverted dropout: kept entries are rescaled by 1/(1-rate)."""
    x = _as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout: rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    out = Tensor(x.data * keep)
    return _record(out, [(x, lambda g: g * keep)])


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize the last axis to zero mean, unit variance, then affine."""
    d = x.shape[-1]
    mu = mean(x, axis=-1, keepdims=True)
    centered = sub(x, expand(mu, -1, d))
    var = mean(mul(centered, centered), axis=-1, keepdims=True)
    inv = power(add(var, Tensor(eps)), -0.5)
    normed = mul(centered, expand(inv, -1, d))
    return add(mul(normed, gain), bias)


def backward(loss, tape):
    """Accumulate d(loss)/d(t) into t.grad for every tensor feeding loss."""
    if loss.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    holders = {id(loss): loss}
    for out, sources in reversed(tape._nodes):
        g = grads.pop(id(out), None)
        holders.pop(id(out), None)
        if g is None:
            continue
        _accumulate(out, g)
        for src, vjp in sources:
            contrib = vjp(g)
            key = id(src)
            if key in grads:
                grads[key] = grads[key] + contrib
            else:
                grads[key] = contrib
                holders[key] = src
    for key, g in grads.items():  # leaves never appear as a node output
        _accumulate(holders[key], g)


def _accumulate(t, g):
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def zero_grads(params):
    for p in params:
        p.zero_grad()


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    n_checked: int
    worst_index: tuple | None = None


def grad_check(f, x, h=1e-5, tol=1e-4):
    """Compare tape gradients of scalar f(x) against central differences.

    Relative error per coordinate is |a - n| / max(|a|, |n|, 1). Any
    non-finite value fails the check outright.
    """
    if not isinstance(x, Tensor):
        x = Tensor(np.asarray(x, dtype=np.float64))
    x.requires_grad = True
    x.grad = None
    with Tape() as tape:
        y = f(x)
        if y.size != 1:
            raise ShapeError(f"grad_check: f must return a scalar, got shape {y.shape}")
        backward(y, tape)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = float(f(x).data)
        flat[i] = keep - h
        down = float(f(x).data)
        flat[i] = keep
        num_flat[i] = (up - down) / (2.0 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    rel = np.abs(analytic - numeric) / denom
    if not (np.isfinite(analytic).all() and np.isfinite(numeric).all()):
        return GradCheckReport(False, float("inf"), flat.size)
    worst = np.unravel_index(int(np.argmax(rel)), x.shape) if x.ndim else ()
    max_rel = float(rel.max()) if rel.size else 0.0
    return GradCheckReport(max_rel <= tol, max_rel, flat.size, worst)


def xavier_uniform_init(shape, fan_in, fan_out, rng):
    """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out))."""
    if fan_in + fan_out <= 0:
        raise ConfigError("xavier_uniform_init: total fan must be positive")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


def zeros_param(shape):
    return Tensor(np.zeros(shape), requires_grad=True)
