"""Complex-valued layers stored as (real, imaginary) tensor pairs.

Linear and convolution layers mix the parts by complex algebra,
(A + iB)(W + iV) = (AW - BV) + i(AV + BW). Nonlinear layers (feed-forward,
layer norm, dropout) act on each part independently through real-valued
functions.
"""

from __future__ import annotations

import numpy as np

from .autodiff import (
    Tensor, add, dropout, layer_norm, matmul, mul, reduce_sum, relu, reshape,
    scale, slice_axis, sub, xavier_uniform_init, zeros_param,
)
from .errors import ShapeError


class ComplexTensor:
    """A pair of equally shaped real tensors interpreted as re + i*im."""

    __slots__ = ("re", "im")

    def __init__(self, re, im):
        self.re = re if isinstance(re, Tensor) else Tensor(re)
        self.im = im if isinstance(im, Tensor) else Tensor(im)
        if self.re.shape != self.im.shape:
            raise ShapeError(
                f"ComplexTensor: parts disagree, {self.re.shape} vs {self.im.shape}"
            )

    @property
    def shape(self):
        return self.re.shape

    @property
    def ndim(self):
        return self.re.ndim

    @classmethod
    def from_array(cls, arr, requires_grad=False):
        arr = np.asarray(arr, dtype=np.complex128)
        return cls(
            Tensor(arr.real.copy(), requires_grad=requires_grad),
            Tensor(arr.imag.copy(), requires_grad=requires_grad),
        )

    def to_array(self):
        return self.re.data + 1j * self.im.data

    def __repr__(self):
        return f"ComplexTensor(shape={self.shape})"


class Linear:
    """Real affine map y = xW + b."""

    def __init__(self, d_in, d_out, rng, bias=True):
        self.w = xavier_uniform_init((d_in, d_out), d_in, d_out, rng)
        self.b = zeros_param((d_out,)) if bias else None

    def __call__(self, x):
        y = matmul(x, self.w)
        return add(y, self.b) if self.b is not None else y

    def parameters(self):
        out = {"w": self.w}
        if self.b is not None:
            out["b"] = self.b
        return out


class ComplexLinear:
    """Complex affine map held as real weight pairs (w_re, w_im)."""

    def __init__(self, d_in, d_out, rng, bias=True):
        self.w_re = xavier_uniform_init((d_in, d_out), d_in, d_out, rng)
        self.w_im = xavier_uniform_init((d_in, d_out), d_in, d_out, rng)
        self.b_re = zeros_param((d_out,)) if bias else None
        self.b_im = zeros_param((d_out,)) if bias else None

    def __call__(self, x):
        return complex_linear(x, self)

    def parameters(self):
        out = {"w_re": self.w_re, "w_im": self.w_im}
        if self.b_re is not None:
            out["b_re"] = self.b_re
            out["b_im"] = self.b_im
        return out


def complex_linear(x, p):
    """(A + iB)(W_re + iW_im) + (b_re + i b_im)."""
    re = sub(matmul(x.re, p.w_re), matmul(x.im, p.w_im))
    im = add(matmul(x.re, p.w_im), matmul(x.im, p.w_re))
    if p.b_re is not None:
        re = add(re, p.b_re)
        im = add(im, p.b_im)
    return ComplexTensor(re, im)


class ComplexConv1d:
    """Valid (no padding) 1-d convolution with complex kernels."""

    def __init__(self, c_in, c_out, width, rng, stride=1):
        if width < 1 or stride < 1:
            raise ShapeError(f"ComplexConv1d: width={width}, stride={stride} must be >= 1")
        fan_in, fan_out = width * c_in, width * c_out
        self.k_re = xavier_uniform_init((width, c_in, c_out), fan_in, fan_out, rng)
        self.k_im = xavier_uniform_init((width, c_in, c_out), fan_in, fan_out, rng)
        self.width = width
        self.stride = stride
        self.c_in = c_in
        self.c_out = c_out

    def __call__(self, x):
        return complex_conv1d(x, self)

    def parameters(self):
        return {"k_re": self.k_re, "k_im": self.k_im}


def complex_conv1d(x, conv):
    """Convolve [T, C_in] complex input down to [T_out, C_out].

    Expressed as a sum over kernel taps of strided-slice matmuls so the
    tape differentiates it with no bespoke backward rule.
    """
    t_len = x.shape[0]
    if x.ndim != 2 or x.shape[1] != conv.c_in:
        raise ShapeError(f"complex_conv1d: expected [T, {conv.c_in}] input, got {x.shape}")
    if t_len < conv.width:
        raise ShapeError(f"complex_conv1d: input length {t_len} shorter than kernel width {conv.width}")
    t_out = (t_len - conv.width) // conv.stride + 1
    re = im = None
    for w in range(conv.width):
        stop = w + conv.stride * (t_out - 1) + 1
        xr = slice_axis(x.re, 0, w, stop, conv.stride)
        xi = slice_axis(x.im, 0, w, stop, conv.stride)
        kr = reshape(slice_axis(conv.k_re, 0, w, w + 1), (conv.c_in, conv.c_out))
        ki = reshape(slice_axis(conv.k_im, 0, w, w + 1), (conv.c_in, conv.c_out))
        tap_re = sub(matmul(xr, kr), matmul(xi, ki))
        tap_im = add(matmul(xr, ki), matmul(xi, kr))
        re = tap_re if re is None else add(re, tap_re)
        im = tap_im if im is None else add(im, tap_im)
    return ComplexTensor(re, im)


class ComplexFeedForward:
    """Two-layer ReLU nets applied to the re and im parts separately.

    The parts never mix: perturbing im(x) cannot move re(out).
    """

    def __init__(self, d_model, d_ff, rng, dropout_rate=0.1):
        self.w1_re = xavier_uniform_init((d_model, d_ff), d_model, d_ff, rng)
        self.w1_im = xavier_uniform_init((d_model, d_ff), d_model, d_ff, rng)
        self.b1_re = zeros_param((d_ff,))
        self.b1_im = zeros_param((d_ff,))
        self.w2_re = xavier_uniform_init((d_ff, d_model), d_ff, d_model, rng)
        self.w2_im = xavier_uniform_init((d_ff, d_model), d_ff, d_model, rng)
        self.b2_re = zeros_param((d_model,))
        self.b2_im = zeros_param((d_model,))
        self.dropout_rate = dropout_rate

    def __call__(self, x, training=False, rng=None):
        return complex_feed_forward(x, self, training=training, rng=rng)

    def parameters(self):
        return {
            "w1_re": self.w1_re, "w1_im": self.w1_im,
            "b1_re": self.b1_re, "b1_im": self.b1_im,
            "w2_re": self.w2_re, "w2_im": self.w2_im,
            "b2_re": self.b2_re, "b2_im": self.b2_im,
        }


def complex_feed_forward(x, ffn, training=False, rng=None):
    def branch(part, w1, b1, w2, b2):
        h = relu(add(matmul(part, w1), b1))
        h = dropout(h, ffn.dropout_rate, training, rng)
        return add(matmul(h, w2), b2)

    return ComplexTensor(
        branch(x.re, ffn.w1_re, ffn.b1_re, ffn.w2_re, ffn.b2_re),
        branch(x.im, ffn.w1_im, ffn.b1_im, ffn.w2_im, ffn.b2_im),
    )


class ComplexLayerNorm:
    """Independent layer norm over the last axis of each part."""

    def __init__(self, d, eps=1e-5):
        self.gain_re = Tensor(np.ones(d), requires_grad=True)
        self.bias_re = zeros_param((d,))
        self.gain_im = Tensor(np.ones(d), requires_grad=True)
        self.bias_im = zeros_param((d,))
        self.eps = eps

    def __call__(self, x):
        return complex_layer_norm(x, self)

    def parameters(self):
        return {
            "gain_re": self.gain_re, "bias_re": self.bias_re,
            "gain_im": self.gain_im, "bias_im": self.bias_im,
        }


def complex_layer_norm(x, ln):
    return ComplexTensor(
        layer_norm(x.re, ln.gain_re, ln.bias_re, ln.eps),
        layer_norm(x.im, ln.gain_im, ln.bias_im, ln.eps),
    )


def complex_dropout(x, rate, training, rng):
    """Dropout with independent masks on the two parts."""
    if not training or rate == 0.0:
        return x
    return ComplexTensor(
        dropout(x.re, rate, training, rng),
        dropout(x.im, rate, training, rng),
    )


def positional_encoding(t_len, d_model):
    """Sinusoidal position table: sin on even columns, cos on odd ones."""
    pos = np.arange(t_len, dtype=np.float64)[:, None]
    idx = np.arange(d_model, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, 2.0 * np.floor(idx / 2.0) / d_model)
    table = np.empty((t_len, d_model))
    table[:, 0::2] = np.sin(angles[:, 0::2])
    table[:, 1::2] = np.cos(angles[:, 1::2])
    return Tensor(table)


def add_positional(x):
    """Add the sinusoidal table to both parts of a [.., T, d] stream."""
    pe = positional_encoding(x.shape[-2], x.shape[-1])
    return ComplexTensor(add(x.re, pe), add(x.im, pe))


def complex_mse(a, b):
    """Mean squared error between complex pairs, averaged over both parts."""
    dr = sub(a.re, b.re)
    di = sub(a.im, b.im)
    total = add(reduce_sum(mul(dr, dr)), reduce_sum(mul(di, di)))
    return scale(total, 0.5 / max(dr.size, 1))
