"""Complex-valued building blocks checked against plain numpy complex
arithmetic, which exercises none of the tape machinery."""

import numpy as np
import pytest

from cxformer.autodiff import Tape, Tensor, backward, grad_check, mul, reduce_sum
from cxformer.complex_layers import (
    ComplexConv1d,
    ComplexFeedForward,
    ComplexLayerNorm,
    ComplexLinear,
    ComplexTensor,
    Linear,
    add_positional,
    complex_dropout,
    complex_mse,
    positional_encoding,
)
from cxformer.errors import ShapeError


def _cx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _run(layer, z):
    with Tape():
        out = layer(ComplexTensor.from_array(z))
    return out.to_array()


# ------------------------------------------------------------ ComplexTensor

def test_complex_tensor_round_trips_numpy_arrays():
    rng = np.random.default_rng(0)
    z = _cx(rng, 3, 4)
    assert np.array_equal(ComplexTensor.from_array(z).to_array(), z)


def test_complex_tensor_rejects_mismatched_parts():
    with pytest.raises(ShapeError):
        ComplexTensor(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))


# ------------------------------------------------------------ linear layers

def test_complex_linear_matches_complex_matrix_product():
    rng = np.random.default_rng(1)
    layer = ComplexLinear(4, 5, rng)
    z = _cx(rng, 6, 4)
    w = layer.w_re.data + 1j * layer.w_im.data
    b = layer.b_re.data + 1j * layer.b_im.data
    assert np.allclose(_run(layer, z), z @ w + b, atol=1e-12)


def test_complex_linear_multiplication_rule_on_scalars():
    # (1 + 2i) * (3 + 4i) = -5 + 10i via a 1x1 weight, no bias offset
    rng = np.random.default_rng(2)
    layer = ComplexLinear(1, 1, rng)
    layer.w_re.data[:] = 3.0
    layer.w_im.data[:] = 4.0
    layer.b_re.data[:] = 0.0
    layer.b_im.data[:] = 0.0
    out = _run(layer, np.array([[1.0 + 2.0j]]))
    assert np.allclose(out, np.array([[-5.0 + 10.0j]]), atol=1e-12)


def test_real_linear_matches_affine_map():
    rng = np.random.default_rng(3)
    layer = Linear(3, 2, rng)
    x = rng.standard_normal((5, 3))
    with Tape():
        out = layer(Tensor(x))
    assert np.allclose(out.data, x @ layer.w.data + layer.b.data, atol=1e-12)


# ------------------------------------------------------------ convolution

def test_complex_conv1d_matches_direct_convolution_sum():
    rng = np.random.default_rng(4)
    layer = ComplexConv1d(3, 2, width=3, rng=rng)
    z = _cx(rng, 8, 3)
    out = _run(layer, z)
    k = layer.k_re.data + 1j * layer.k_im.data  # [taps, c_in, c_out]
    expected = np.zeros((6, 2), complex)
    for t in range(6):
        for tap in range(3):
            expected[t] += z[t + tap] @ k[tap]
    assert np.allclose(out, expected, atol=1e-12)


def test_complex_conv1d_output_length_shrinks_by_kernel():
    rng = np.random.default_rng(5)
    layer = ComplexConv1d(2, 2, width=4, rng=rng)
    out = _run(layer, _cx(rng, 9, 2))
    assert out.shape == (6, 2)


# ------------------------------------------------------------ feed-forward

def test_feed_forward_parts_never_mix():
    rng = np.random.default_rng(6)
    ffn = ComplexFeedForward(3, 8, rng, dropout_rate=0.0)
    z = _cx(rng, 4, 3)
    real_only = _run(ffn, z.real + 0j)
    both = _run(ffn, z)
    # real branch sees only the real part, so it cannot react to z.imag
    assert np.allclose(both.real, real_only.real, atol=1e-12)


def test_feed_forward_matches_two_relu_networks():
    rng = np.random.default_rng(7)
    ffn = ComplexFeedForward(3, 5, rng, dropout_rate=0.0)
    z = _cx(rng, 4, 3)
    out = _run(ffn, z)

    def branch(x, w1, b1, w2, b2):
        return np.maximum(x @ w1.data + b1.data, 0.0) @ w2.data + b2.data

    assert np.allclose(out.real, branch(z.real, ffn.w1_re, ffn.b1_re,
                                        ffn.w2_re, ffn.b2_re), atol=1e-12)
    assert np.allclose(out.imag, branch(z.imag, ffn.w1_im, ffn.b1_im,
                                        ffn.w2_im, ffn.b2_im), atol=1e-12)


# ------------------------------------------------------------ normalization

def test_complex_layer_norm_standardizes_each_part():
    rng = np.random.default_rng(8)
    ln = ComplexLayerNorm(6)
    z = _cx(rng, 5, 6)
    out = _run(ln, z)
    for part_out, part_in in ((out.real, z.real), (out.imag, z.imag)):
        mu = part_in.mean(axis=-1, keepdims=True)
        var = part_in.var(axis=-1, keepdims=True)
        assert np.allclose(part_out, (part_in - mu) / np.sqrt(var + 1e-5),
                           atol=1e-9)


def test_complex_layer_norm_gradient():
    rng = np.random.default_rng(9)
    ln = ComplexLayerNorm(4)
    z_im = Tensor(rng.standard_normal((3, 4)))
    coeffs_re = Tensor(rng.standard_normal((3, 4)))
    coeffs_im = Tensor(rng.standard_normal((3, 4)))

    def f(x):
        out = ln(ComplexTensor(x, z_im))
        return reduce_sum(mul(out.re, coeffs_re)) + reduce_sum(mul(out.im, coeffs_im))

    report = grad_check(f, rng.standard_normal((3, 4)))
    assert report.passed, report


# ------------------------------------------------------------ dropout

def test_complex_dropout_draws_independent_part_masks():
    rng = np.random.default_rng(10)
    z = np.ones((300, 40)) + 1j * np.ones((300, 40))
    with Tape():
        out = complex_dropout(ComplexTensor.from_array(z), rate=0.5,
                              training=True, rng=rng)
    re_zero = out.to_array().real == 0.0
    im_zero = out.to_array().imag == 0.0
    # independent masks almost surely disagree somewhere at this size
    assert np.any(re_zero != im_zero)


def test_complex_dropout_eval_is_identity():
    rng = np.random.default_rng(11)
    z = _cx(rng, 4, 4)
    with Tape():
        out = complex_dropout(ComplexTensor.from_array(z), rate=0.5,
                              training=False, rng=rng)
    assert np.array_equal(out.to_array(), z)


# ------------------------------------------------------------ positional

def test_positional_encoding_first_row_alternates_zero_one():
    pe = positional_encoding(3, 4).data
    assert np.array_equal(pe[0], np.array([0.0, 1.0, 0.0, 1.0]))


def test_positional_encoding_values_are_sin_cos_pairs():
    pe = positional_encoding(7, 6).data
    for pos in range(7):
        for i in range(6):
            angle = pos / 10000.0 ** (2 * (i // 2) / 6)
            want = np.sin(angle) if i % 2 == 0 else np.cos(angle)
            assert abs(pe[pos, i] - want) < 1e-12


def test_add_positional_offsets_both_parts():
    rng = np.random.default_rng(12)
    z = _cx(rng, 2, 5, 4)
    with Tape():
        out = add_positional(ComplexTensor.from_array(z))
    pe = positional_encoding(5, 4).data
    assert np.allclose(out.to_array(), z + pe * (1 + 1j), atol=1e-12)


# ------------------------------------------------------------ loss

def test_complex_mse_matches_half_mean_squared_modulus():
    rng = np.random.default_rng(13)
    a, b = _cx(rng, 4, 3), _cx(rng, 4, 3)
    with Tape():
        loss = complex_mse(ComplexTensor.from_array(a), ComplexTensor.from_array(b))
    expected = 0.5 * np.mean(np.abs(a - b) ** 2)
    assert np.allclose(float(loss.data), expected, atol=1e-12)


def test_complex_mse_gradient():
    rng = np.random.default_rng(14)
    target = ComplexTensor.from_array(_cx(rng, 3, 2))
    other = Tensor(rng.standard_normal((3, 2)))

    def f(x):
        return complex_mse(ComplexTensor(x, other), target)

    report = grad_check(f, rng.standard_normal((3, 2)))
    assert report.passed, report
