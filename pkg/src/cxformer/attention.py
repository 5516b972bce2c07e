"""Attention with min-max score normalization, real and complex.

The complex form expands Q K^T V over real and imaginary parts into eight
multi-head terms. With shared projections the parts are taken after the
complex projection, so the taped computation must agree with a plain
complex-arithmetic evaluation of (XW_Q)(XW_K)^T(XW_V); the transpose is NOT
conjugated. ``oracle_linear_complex_attention`` provides that independent
route for equivalence checks.

Masks are boolean [T_q, T_k] matrices, True where a query may attend.
"""

from __future__ import annotations

import math

import numpy as np

from .autodiff import (
    Tensor, add, exp, expand, matmul, mul, power, reduce_max, reduce_min,
    reduce_sum, reshape, scale, sub, swapaxes,
)
from .complex_layers import ComplexLinear, ComplexTensor, complex_linear
from .errors import ConfigError, ShapeError

# Sentinel magnitude pushed into blocked positions before min/max reduction.
_BIG = 1e30

# Term tables for the eight-way expansion of (A+iB)(C+iD)^T(E+iF):
# entries are (q_part, k_part, v_part, sign) with part 0 = re, 1 = im.
REAL_TERMS = ((0, 0, 0, 1.0), (0, 1, 1, -1.0), (1, 0, 1, -1.0), (1, 1, 0, -1.0))
IMAG_TERMS = ((0, 0, 1, 1.0), (0, 1, 0, 1.0), (1, 0, 0, 1.0), (1, 1, 1, -1.0))


def causal_mask(t_len):
    """Lower-triangular mask: position t sees keys 0..t."""
    return np.tril(np.ones((t_len, t_len), dtype=bool))


def _mask_constants(mask, scores_shape):
    mask = np.asarray(mask)
    if mask.dtype != np.bool_:
        raise ShapeError("attention mask must be boolean")
    if mask.shape != scores_shape[-2:]:
        raise ShapeError(
            f"mask shape {mask.shape} does not match score rows/cols {scores_shape[-2:]}"
        )
    if not mask.any(axis=-1).all():
        raise ShapeError("attention mask must allow at least one key per query row")
    return Tensor(mask.astype(np.float64)), Tensor((~mask).astype(np.float64))


def min_max_norm(scores, mask=None, eps=1e-9):
    """Rescale each score row to [0, 1] by its min and max.

    out = (scores - min) / (max - min + eps), computed over the last axis.
    Blocked positions are excluded from the reductions via +/-1e30
    sentinels and forced to exactly 0 in the output. A constant row maps
    to all zeros rather than dividing by zero.
    """
    if eps <= 0.0:
        raise ConfigError(f"min_max_norm: eps must be positive, got {eps}")
    t_k = scores.shape[-1]
    if mask is not None:
        keep, blocked = _mask_constants(mask, scores.shape)
        lo_src = add(mul(scores, keep), scale(blocked, _BIG))
        hi_src = sub(mul(scores, keep), scale(blocked, _BIG))
    else:
        lo_src = hi_src = scores
    lo = reduce_min(lo_src, -1, keepdims=True)
    hi = reduce_max(hi_src, -1, keepdims=True)
    inv = power(add(sub(hi, lo), Tensor(eps)), -1.0)
    out = mul(sub(scores, expand(lo, -1, t_k)), expand(inv, -1, t_k))
    if mask is not None:
        out = mul(out, keep)
    return out


def softmax_norm(scores, mask=None):
    """Row softmax, used only by the concatenated real baseline."""
    t_k = scores.shape[-1]
    if mask is not None:
        keep, blocked = _mask_constants(mask, scores.shape)
        scores = sub(mul(scores, keep), scale(blocked, _BIG))
    m = reduce_max(scores, -1, keepdims=True)
    z = exp(sub(scores, expand(m, -1, t_k)))
    total = reduce_sum(z, axis=-1, keepdims=True)
    return mul(z, expand(power(total, -1.0), -1, t_k))


def scaled_attention(q, k, v, mask=None, norm="minmax", eps=1e-9):
    """Attention(Q, K, V) = normalize(Q K^T / sqrt(d_k)) V."""
    d_k = q.shape[-1]
    if k.shape[-1] != d_k:
        raise ShapeError(f"scaled_attention: query width {d_k} vs key width {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(
            f"scaled_attention: {k.shape[-2]} keys vs {v.shape[-2]} values"
        )
    scores = scale(matmul(q, swapaxes(k, -1, -2)), 1.0 / math.sqrt(d_k))
    if norm == "minmax":
        weights = min_max_norm(scores, mask, eps)
    elif norm == "softmax":
        weights = softmax_norm(scores, mask)
    else:
        raise ConfigError(f"scaled_attention: unknown norm '{norm}'")
    return matmul(weights, v)


def split_heads(x, n_heads):
    """[.., T, d] -> [.., H, T, d/H]."""
    t_len, d = x.shape[-2], x.shape[-1]
    if d % n_heads != 0:
        raise ConfigError(f"model width {d} is not divisible by {n_heads} heads")
    lead = x.shape[:-2]
    y = reshape(x, (*lead, t_len, n_heads, d // n_heads))
    return swapaxes(y, -2, -3)


def merge_heads(x):
    """Inverse of split_heads: [.., H, T, d/H] -> [.., T, d]."""
    h, d_k = x.shape[-3], x.shape[-1]
    y = swapaxes(x, -2, -3)
    return reshape(y, (*y.shape[:-2], h * d_k))


def multi_head(q, k, v, n_heads, mask=None, wq=None, wk=None, wv=None,
               wo=None, norm="minmax", eps=1e-9):
    """Multi-head attention over real streams.

    Projection weights are optional; with none given and one head this is
    exactly ``scaled_attention``. The complex attention below calls this
    with pre-projected parts and no output weight.
    """
    if wq is not None:
        q = matmul(q, wq)
    if wk is not None:
        k = matmul(k, wk)
    if wv is not None:
        v = matmul(v, wv)
    heads = scaled_attention(
        split_heads(q, n_heads), split_heads(k, n_heads), split_heads(v, n_heads),
        mask=mask, norm=norm, eps=eps,
    )
    out = merge_heads(heads)
    if wo is not None:
        out = matmul(out, wo)
    return out


class ComplexAttentionParams:
    """Projections for complex attention.

    Shared mode (default) holds one complex W_Q, W_K, W_V applied before
    the parts are split, which is what makes the eight-term sum equal the
    complex product Q K^T V. Independent mode instead gives each of the
    eight terms its own real projection triple. W_O is always a single
    complex map applied to the recombined pair.
    """

    def __init__(self, d_model, n_heads, rng, independent_terms=False):
        if d_model % n_heads != 0:
            raise ConfigError(f"d_model {d_model} is not divisible by n_heads {n_heads}")
        self.d_model = d_model
        self.n_heads = n_heads
        self.independent_terms = independent_terms
        if independent_terms:
            from .autodiff import xavier_uniform_init

            n_terms = len(REAL_TERMS) + len(IMAG_TERMS)
            self.term_q = [xavier_uniform_init((d_model, d_model), d_model, d_model, rng)
                           for _ in range(n_terms)]
            self.term_k = [xavier_uniform_init((d_model, d_model), d_model, d_model, rng)
                           for _ in range(n_terms)]
            self.term_v = [xavier_uniform_init((d_model, d_model), d_model, d_model, rng)
                           for _ in range(n_terms)]
        else:
            self.q_proj = ComplexLinear(d_model, d_model, rng, bias=False)
            self.k_proj = ComplexLinear(d_model, d_model, rng, bias=False)
            self.v_proj = ComplexLinear(d_model, d_model, rng, bias=False)
        self.out_proj = ComplexLinear(d_model, d_model, rng, bias=False)

    def parameters(self):
        out = {}
        if self.independent_terms:
            for i in range(len(self.term_q)):
                out[f"term{i}_q"] = self.term_q[i]
                out[f"term{i}_k"] = self.term_k[i]
                out[f"term{i}_v"] = self.term_v[i]
        else:
            for name, proj in (("q", self.q_proj), ("k", self.k_proj), ("v", self.v_proj)):
                for key, p in proj.parameters().items():
                    out[f"{name}_{key}"] = p
        for key, p in self.out_proj.parameters().items():
            out[f"o_{key}"] = p
        return out


def _projected_parts(x_q, x_kv, p):
    """Q, K, V part pairs for the eight terms, per parameter mode."""
    if p.independent_terms:
        q_raw = (x_q.re, x_q.im)
        kv_raw = (x_kv.re, x_kv.im)

        def parts(t_idx, iq, ik, iv):
            return (
                matmul(q_raw[iq], p.term_q[t_idx]),
                matmul(kv_raw[ik], p.term_k[t_idx]),
                matmul(kv_raw[iv], p.term_v[t_idx]),
            )

        return parts
    qc = complex_linear(x_q, p.q_proj)
    kc = complex_linear(x_kv, p.k_proj)
    vc = complex_linear(x_kv, p.v_proj)
    qp, kp, vp = (qc.re, qc.im), (kc.re, kc.im), (vc.re, vc.im)

    def parts(t_idx, iq, ik, iv):
        return qp[iq], kp[ik], vp[iv]

    return parts


def complex_attention(x_q, p, mask=None, x_kv=None, eps=1e-9):
    """Eight-term complex multi-head attention.

    re(out) = MH(Qr,Kr,Vr) - MH(Qr,Ki,Vi) - MH(Qi,Kr,Vi) - MH(Qi,Ki,Vr)
    im(out) = MH(Qr,Kr,Vi) + MH(Qr,Ki,Vr) + MH(Qi,Kr,Vr) - MH(Qi,Ki,Vi)

    followed by one complex output projection. Cross-attention passes the
    encoder stream as ``x_kv``; keys and values are projected from it.
    """
    src = x_kv if x_kv is not None else x_q
    parts = _projected_parts(x_q, src, p)

    def accumulate(table, offset):
        acc = None
        for t_idx, (iq, ik, iv, sign) in enumerate(table):
            q, k, v = parts(offset + t_idx, iq, ik, iv)
            h = multi_head(q, k, v, p.n_heads, mask=mask, eps=eps)
            if sign < 0:
                h = scale(h, -1.0)
            acc = h if acc is None else add(acc, h)
        return acc

    re_sum = accumulate(REAL_TERMS, 0)
    im_sum = accumulate(IMAG_TERMS, len(REAL_TERMS))
    return complex_linear(ComplexTensor(re_sum, im_sum), p.out_proj)


def complex_qkv_product(x, p, x_kv=None):
    """Un-normalized single-head Q K^T V via the eight-term expansion.

    This is the taped route whose output must match the complex-arithmetic
    oracle below to round-off. Requires shared projections.
    """
    if p.independent_terms:
        raise ConfigError("complex_qkv_product requires shared complex projections")
    src = x_kv if x_kv is not None else x
    parts = _projected_parts(x, src, p)

    def accumulate(table, offset):
        acc = None
        for t_idx, (iq, ik, iv, sign) in enumerate(table):
            q, k, v = parts(offset + t_idx, iq, ik, iv)
            h = matmul(matmul(q, swapaxes(k, -1, -2)), v)
            if sign < 0:
                h = scale(h, -1.0)
            acc = h if acc is None else add(acc, h)
        return acc

    return ComplexTensor(
        accumulate(REAL_TERMS, 0),
        accumulate(IMAG_TERMS, len(REAL_TERMS)),
    )


def oracle_linear_complex_attention(x, p, x_kv=None):
    """Independent complex-arithmetic evaluation of (XW_Q)(SW_K)^T(SW_V).

    Plain numpy complex algebra, no tape, plain (non-conjugate) transpose.
    Returns a complex ndarray.
    """
    if p.independent_terms:
        raise ConfigError("oracle requires shared complex projections")
    big_x = x.to_array() if isinstance(x, ComplexTensor) else np.asarray(x, dtype=complex)
    if x_kv is None:
        big_s = big_x
    else:
        big_s = (x_kv.to_array() if isinstance(x_kv, ComplexTensor)
                 else np.asarray(x_kv, dtype=complex))
    w_q = p.q_proj.w_re.data + 1j * p.q_proj.w_im.data
    w_k = p.k_proj.w_re.data + 1j * p.k_proj.w_im.data
    w_v = p.v_proj.w_re.data + 1j * p.v_proj.w_im.data
    q = big_x @ w_q
    k = big_s @ w_k
    v = big_s @ w_v
    return q @ np.swapaxes(k, -1, -2) @ v
