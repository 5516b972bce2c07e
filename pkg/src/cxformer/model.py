"""Encoder-decoder transformer over complex spectral frames.

Two variants share this file. The complex variant keeps separate re/im
streams through complex attention and per-part sublayers. The
concatenated baseline flattens [re; im] into one real stream of width
2*d_model and uses conventional softmax attention; it exists as the
comparison point for the complex model.

Sublayer connections are "norm & add": out = x + Dropout(LayerNorm(sub(x))),
with the normalization applied before the residual sum. The decoder's
default sublayer order is masked self-attention, feed-forward, then
cross-attention; ``decoder_order="standard"`` swaps the last two.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .attention import ComplexAttentionParams, causal_mask, complex_attention, multi_head
from .autodiff import (
    Tensor, add, concat, dropout, layer_norm, matmul, mean, relu, reshape,
    slice_axis, xavier_uniform_init, zeros_param,
)
from .complex_layers import (
    ComplexFeedForward, ComplexLayerNorm, ComplexLinear, ComplexTensor, Linear,
    add_positional, complex_dropout, complex_feed_forward, complex_layer_norm,
    complex_linear, positional_encoding,
)
from .errors import ConfigError

VARIANTS = ("complex", "concatenated-baseline")
DECODER_ORDERS = ("ffn-before-cross", "standard")


@dataclass
class ModelConfig:
    d_model: int = 64
    n_heads: int = 8
    n_encoder_layers: int = 6
    n_decoder_layers: int = 6
    d_ff: int = 256
    dropout_attn: float = 0.0
    dropout_relu: float = 0.1
    dropout_residual: float = 0.1
    positional_encoding: bool = True
    variant: str = "complex"
    decoder_order: str = "ffn-before-cross"
    independent_term_weights: bool = False
    attention_eps: float = 1e-9

    def validate(self):
        if self.d_model < 1 or self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} must be a positive multiple of n_heads {self.n_heads}"
            )
        if self.n_encoder_layers < 0 or self.n_decoder_layers < 0:
            raise ConfigError("layer counts must be non-negative")
        if self.d_ff < 1:
            raise ConfigError(f"d_ff must be positive, got {self.d_ff}")
        for name in ("dropout_attn", "dropout_relu", "dropout_residual"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {rate}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got '{self.variant}'")
        if self.decoder_order not in DECODER_ORDERS:
            raise ConfigError(
                f"decoder_order must be one of {DECODER_ORDERS}, got '{self.decoder_order}'"
            )
        if self.attention_eps <= 0.0:
            raise ConfigError("attention_eps must be positive")
        return self

    def to_dict(self):
        return asdict(self)


def _merge(out, prefix, obj):
    for key, p in obj.parameters().items():
        out[f"{prefix}.{key}"] = p


class NormAdd:
    """Complex sublayer connection: x + Dropout(LayerNorm(sub_out))."""

    def __init__(self, d, dropout_rate):
        self.ln = ComplexLayerNorm(d)
        self.rate = dropout_rate

    def __call__(self, x, sub_out, training=False, rng=None):
        y = complex_layer_norm(sub_out, self.ln)
        y = complex_dropout(y, self.rate, training, rng)
        return ComplexTensor(add(x.re, y.re), add(x.im, y.im))

    def parameters(self):
        return self.ln.parameters()


def norm_add(x, sub_out, params, training=False, rng=None):
    return params(x, sub_out, training=training, rng=rng)


class EncoderLayer:
    def __init__(self, cfg, rng):
        self.cfg = cfg
        self.attn = ComplexAttentionParams(
            cfg.d_model, cfg.n_heads, rng, cfg.independent_term_weights
        )
        self.norm_attn = NormAdd(cfg.d_model, cfg.dropout_residual)
        self.ffn = ComplexFeedForward(cfg.d_model, cfg.d_ff, rng, cfg.dropout_relu)
        self.norm_ffn = NormAdd(cfg.d_model, cfg.dropout_residual)

    def __call__(self, x, training=False, rng=None):
        a = complex_attention(x, self.attn, eps=self.cfg.attention_eps)
        a = complex_dropout(a, self.cfg.dropout_attn, training, rng)
        x = self.norm_attn(x, a, training, rng)
        f = complex_feed_forward(x, self.ffn, training=training, rng=rng)
        return self.norm_ffn(x, f, training, rng)

    def parameters(self):
        out = {}
        _merge(out, "attn", self.attn)
        _merge(out, "norm_attn", self.norm_attn)
        _merge(out, "ffn", self.ffn)
        _merge(out, "norm_ffn", self.norm_ffn)
        return out


class DecoderLayer:
    def __init__(self, cfg, rng):
        self.cfg = cfg
        self.self_attn = ComplexAttentionParams(
            cfg.d_model, cfg.n_heads, rng, cfg.independent_term_weights
        )
        self.norm_self = NormAdd(cfg.d_model, cfg.dropout_residual)
        self.ffn = ComplexFeedForward(cfg.d_model, cfg.d_ff, rng, cfg.dropout_relu)
        self.norm_ffn = NormAdd(cfg.d_model, cfg.dropout_residual)
        self.cross_attn = ComplexAttentionParams(
            cfg.d_model, cfg.n_heads, rng, cfg.independent_term_weights
        )
        self.norm_cross = NormAdd(cfg.d_model, cfg.dropout_residual)

    def __call__(self, y, memory, mask, training=False, rng=None):
        cfg = self.cfg

        def self_block(z):
            a = complex_attention(z, self.self_attn, mask=mask, eps=cfg.attention_eps)
            a = complex_dropout(a, cfg.dropout_attn, training, rng)
            return self.norm_self(z, a, training, rng)

        def ffn_block(z):
            f = complex_feed_forward(z, self.ffn, training=training, rng=rng)
            return self.norm_ffn(z, f, training, rng)

        def cross_block(z):
            c = complex_attention(z, self.cross_attn, x_kv=memory, eps=cfg.attention_eps)
            c = complex_dropout(c, cfg.dropout_attn, training, rng)
            return self.norm_cross(z, c, training, rng)

        blocks = (self_block, ffn_block, cross_block) if cfg.decoder_order == "ffn-before-cross" \
            else (self_block, cross_block, ffn_block)
        for block in blocks:
            y = block(y)
        return y

    def parameters(self):
        out = {}
        _merge(out, "self_attn", self.self_attn)
        _merge(out, "norm_self", self.norm_self)
        _merge(out, "ffn", self.ffn)
        _merge(out, "norm_ffn", self.norm_ffn)
        _merge(out, "cross_attn", self.cross_attn)
        _merge(out, "norm_cross", self.norm_cross)
        return out


class ComplexTransformer:
    """Complex-stream encoder-decoder with classification and generation heads."""

    def __init__(self, cfg, in_features, n_labels, rng):
        cfg.validate()
        if cfg.variant != "complex":
            raise ConfigError(f"ComplexTransformer built with variant '{cfg.variant}'")
        self.cfg = cfg
        self.in_features = in_features
        self.n_labels = n_labels
        self.embed_enc = ComplexLinear(in_features, cfg.d_model, rng)
        self.enc_layers = [EncoderLayer(cfg, rng) for _ in range(cfg.n_encoder_layers)]
        self.label_head = Linear(2 * cfg.d_model, n_labels, rng)
        if cfg.n_decoder_layers > 0:
            self.embed_dec = ComplexLinear(in_features, cfg.d_model, rng)
            self.dec_layers = [DecoderLayer(cfg, rng) for _ in range(cfg.n_decoder_layers)]
            self.frame_out = ComplexLinear(cfg.d_model, in_features, rng)
            self.gen_label_head = Linear(2 * cfg.d_model, n_labels, rng)
        else:
            self.embed_dec = None
            self.dec_layers = []
            self.frame_out = None
            self.gen_label_head = None

    # -- streams ---------------------------------------------------------

    def run_encoder(self, x, training=False, rng=None):
        """Apply positional encoding and the encoder stack at model width."""
        if self.cfg.positional_encoding:
            x = add_positional(x)
        for layer in self.enc_layers:
            x = layer(x, training, rng)
        return x

    def encode(self, frames, training=False, rng=None):
        return self.run_encoder(
            complex_linear(frames, self.embed_enc), training, rng
        )

    def run_decoder(self, y, memory, training=False, rng=None):
        if not self.dec_layers:
            raise ConfigError("model has no decoder layers")
        mask = causal_mask(y.shape[-2])
        if self.cfg.positional_encoding:
            y = add_positional(y)
        for layer in self.dec_layers:
            y = layer(y, memory, mask, training, rng)
        return y

    def decode(self, dec_frames, memory, training=False, rng=None):
        return self.run_decoder(
            complex_linear(dec_frames, self.embed_dec), memory, training, rng
        )

    # -- heads -----------------------------------------------------------

    def _concat_parts(self, h):
        return concat([h.re, h.im], -1)

    def frame_logits(self, frames, training=False, rng=None):
        """Per-frame label logits [.., T, L] from the encoder stream."""
        h = self.encode(frames, training, rng)
        return self.label_head(self._concat_parts(h))

    def sequence_logits(self, frames, training=False, rng=None):
        """Sequence-level logits [.., L] by mean-pooling the encoder stream."""
        h = self.encode(frames, training, rng)
        pooled = mean(self._concat_parts(h), axis=-2, keepdims=True)
        logits = self.label_head(pooled)
        return reshape(logits, (*logits.shape[:-2], self.n_labels))

    def generate_teacher_forced(self, enc_frames, dec_in_frames, training=False, rng=None):
        """Decode with ground-truth inputs; returns (frames, per-step logits)."""
        memory = self.encode(enc_frames, training, rng)
        h = self.decode(dec_in_frames, memory, training, rng)
        frames = complex_linear(h, self.frame_out)
        logits = self.gen_label_head(self._concat_parts(h))
        return frames, logits

    def generate_free_running(self, enc_frames, seed_frame, n_steps):
        """Feed predictions back as decoder input for n_steps frames.

        Evaluation only: no dropout, no tape. ``seed_frame`` is the last
        conditioning frame, shape [.., 1, F].
        """
        memory = self.encode(enc_frames)
        window = seed_frame
        for _ in range(n_steps):
            h = self.decode(window, memory)
            frames = complex_linear(h, self.frame_out)
            last = ComplexTensor(
                slice_axis(frames.re, -2, frames.shape[-2] - 1, frames.shape[-2]),
                slice_axis(frames.im, -2, frames.shape[-2] - 1, frames.shape[-2]),
            )
            window = ComplexTensor(
                concat([window.re, last.re], -2), concat([window.im, last.im], -2)
            )
        h = self.decode(
            ComplexTensor(
                slice_axis(window.re, -2, 0, n_steps),
                slice_axis(window.im, -2, 0, n_steps),
            ),
            memory,
        )
        frames = complex_linear(h, self.frame_out)
        logits = self.gen_label_head(self._concat_parts(h))
        return frames, logits

    def parameters(self):
        out = {}
        _merge(out, "embed_enc", self.embed_enc)
        for i, layer in enumerate(self.enc_layers):
            _merge(out, f"enc{i}", layer)
        _merge(out, "label_head", self.label_head)
        if self.embed_dec is not None:
            _merge(out, "embed_dec", self.embed_dec)
            for i, layer in enumerate(self.dec_layers):
                _merge(out, f"dec{i}", layer)
            _merge(out, "frame_out", self.frame_out)
            _merge(out, "gen_label_head", self.gen_label_head)
        return out


# -- concatenated real baseline -----------------------------------------


class FeedForward:
    """Real two-layer ReLU net with dropout after the activation."""

    def __init__(self, d, d_hidden, rng, dropout_rate=0.1):
        self.w1 = xavier_uniform_init((d, d_hidden), d, d_hidden, rng)
        self.b1 = zeros_param((d_hidden,))
        self.w2 = xavier_uniform_init((d_hidden, d), d_hidden, d, rng)
        self.b2 = zeros_param((d,))
        self.rate = dropout_rate

    def __call__(self, x, training=False, rng=None):
        h = relu(add(matmul(x, self.w1), self.b1))
        h = dropout(h, self.rate, training, rng)
        return add(matmul(h, self.w2), self.b2)

    def parameters(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


class RealNormAdd:
    def __init__(self, d, dropout_rate):
        self.gain = Tensor(np.ones(d), requires_grad=True)
        self.bias = zeros_param((d,))
        self.rate = dropout_rate

    def __call__(self, x, sub_out, training=False, rng=None):
        y = layer_norm(sub_out, self.gain, self.bias)
        y = dropout(y, self.rate, training, rng)
        return add(x, y)

    def parameters(self):
        return {"gain": self.gain, "bias": self.bias}


class _AttentionWeights:
    def __init__(self, d, rng):
        self.wq = xavier_uniform_init((d, d), d, d, rng)
        self.wk = xavier_uniform_init((d, d), d, d, rng)
        self.wv = xavier_uniform_init((d, d), d, d, rng)
        self.wo = xavier_uniform_init((d, d), d, d, rng)

    def __call__(self, q_src, kv_src, n_heads, mask):
        return multi_head(
            q_src, kv_src, kv_src, n_heads, mask=mask,
            wq=self.wq, wk=self.wk, wv=self.wv, wo=self.wo, norm="softmax",
        )

    def parameters(self):
        return {"wq": self.wq, "wk": self.wk, "wv": self.wv, "wo": self.wo}


class RealEncoderLayer:
    def __init__(self, cfg, rng):
        self.cfg = cfg
        d = 2 * cfg.d_model
        self.attn = _AttentionWeights(d, rng)
        self.norm_attn = RealNormAdd(d, cfg.dropout_residual)
        self.ffn = FeedForward(d, 2 * cfg.d_ff, rng, cfg.dropout_relu)
        self.norm_ffn = RealNormAdd(d, cfg.dropout_residual)

    def __call__(self, x, training=False, rng=None):
        a = self.attn(x, x, self.cfg.n_heads, None)
        a = dropout(a, self.cfg.dropout_attn, training, rng)
        x = self.norm_attn(x, a, training, rng)
        return self.norm_ffn(x, self.ffn(x, training, rng), training, rng)

    def parameters(self):
        out = {}
        _merge(out, "attn", self.attn)
        _merge(out, "norm_attn", self.norm_attn)
        _merge(out, "ffn", self.ffn)
        _merge(out, "norm_ffn", self.norm_ffn)
        return out


class RealDecoderLayer:
    def __init__(self, cfg, rng):
        self.cfg = cfg
        d = 2 * cfg.d_model
        self.self_attn = _AttentionWeights(d, rng)
        self.norm_self = RealNormAdd(d, cfg.dropout_residual)
        self.ffn = FeedForward(d, 2 * cfg.d_ff, rng, cfg.dropout_relu)
        self.norm_ffn = RealNormAdd(d, cfg.dropout_residual)
        self.cross_attn = _AttentionWeights(d, rng)
        self.norm_cross = RealNormAdd(d, cfg.dropout_residual)

    def __call__(self, y, memory, mask, training=False, rng=None):
        cfg = self.cfg

        def self_block(z):
            a = self.self_attn(z, z, cfg.n_heads, mask)
            a = dropout(a, cfg.dropout_attn, training, rng)
            return self.norm_self(z, a, training, rng)

        def ffn_block(z):
            return self.norm_ffn(z, self.ffn(z, training, rng), training, rng)

        def cross_block(z):
            c = multi_head(
                z, memory, memory, cfg.n_heads,
                wq=self.cross_attn.wq, wk=self.cross_attn.wk,
                wv=self.cross_attn.wv, wo=self.cross_attn.wo, norm="softmax",
            )
            c = dropout(c, cfg.dropout_attn, training, rng)
            return self.norm_cross(z, c, training, rng)

        blocks = (self_block, ffn_block, cross_block) if cfg.decoder_order == "ffn-before-cross" \
            else (self_block, cross_block, ffn_block)
        for block in blocks:
            y = block(y)
        return y

    def parameters(self):
        out = {}
        _merge(out, "self_attn", self.self_attn)
        _merge(out, "norm_self", self.norm_self)
        _merge(out, "ffn", self.ffn)
        _merge(out, "norm_ffn", self.norm_ffn)
        _merge(out, "cross_attn", self.cross_attn)
        _merge(out, "norm_cross", self.norm_cross)
        return out


class ConcatenatedTransformer:
    """Baseline: one real stream of width 2*d_model, softmax attention.

    Takes the same complex frames; re and im are concatenated on the
    feature axis before the first projection and split again after the
    generation head, so the external interface matches the complex model.
    """

    def __init__(self, cfg, in_features, n_labels, rng):
        cfg.validate()
        if cfg.variant != "concatenated-baseline":
            raise ConfigError(f"ConcatenatedTransformer built with variant '{cfg.variant}'")
        self.cfg = cfg
        self.in_features = in_features
        self.n_labels = n_labels
        d = 2 * cfg.d_model
        self.embed_enc = Linear(2 * in_features, d, rng)
        self.enc_layers = [RealEncoderLayer(cfg, rng) for _ in range(cfg.n_encoder_layers)]
        self.label_head = Linear(d, n_labels, rng)
        if cfg.n_decoder_layers > 0:
            self.embed_dec = Linear(2 * in_features, d, rng)
            self.dec_layers = [RealDecoderLayer(cfg, rng) for _ in range(cfg.n_decoder_layers)]
            self.frame_out = Linear(d, 2 * in_features, rng)
            self.gen_label_head = Linear(d, n_labels, rng)
        else:
            self.embed_dec = None
            self.dec_layers = []
            self.frame_out = None
            self.gen_label_head = None

    def _flatten(self, frames):
        return concat([frames.re, frames.im], -1)

    def _split(self, flat):
        f = self.in_features
        return ComplexTensor(
            slice_axis(flat, -1, 0, f), slice_axis(flat, -1, f, 2 * f)
        )

    def _positional(self, x):
        if not self.cfg.positional_encoding:
            return x
        return add(x, positional_encoding(x.shape[-2], x.shape[-1]))

    def encode(self, frames, training=False, rng=None):
        x = self._positional(self.embed_enc(self._flatten(frames)))
        for layer in self.enc_layers:
            x = layer(x, training, rng)
        return x

    def decode(self, dec_frames, memory, training=False, rng=None):
        if not self.dec_layers:
            raise ConfigError("model has no decoder layers")
        y = self._positional(self.embed_dec(self._flatten(dec_frames)))
        mask = causal_mask(y.shape[-2])
        for layer in self.dec_layers:
            y = layer(y, memory, mask, training, rng)
        return y

    def frame_logits(self, frames, training=False, rng=None):
        return self.label_head(self.encode(frames, training, rng))

    def sequence_logits(self, frames, training=False, rng=None):
        pooled = mean(self.encode(frames, training, rng), axis=-2, keepdims=True)
        logits = self.label_head(pooled)
        return reshape(logits, (*logits.shape[:-2], self.n_labels))

    def generate_teacher_forced(self, enc_frames, dec_in_frames, training=False, rng=None):
        memory = self.encode(enc_frames, training, rng)
        h = self.decode(dec_in_frames, memory, training, rng)
        return self._split(self.frame_out(h)), self.gen_label_head(h)

    def generate_free_running(self, enc_frames, seed_frame, n_steps):
        memory = self.encode(enc_frames)
        window = seed_frame
        for _ in range(n_steps):
            h = self.decode(window, memory)
            frames = self._split(self.frame_out(h))
            last = ComplexTensor(
                slice_axis(frames.re, -2, frames.shape[-2] - 1, frames.shape[-2]),
                slice_axis(frames.im, -2, frames.shape[-2] - 1, frames.shape[-2]),
            )
            window = ComplexTensor(
                concat([window.re, last.re], -2), concat([window.im, last.im], -2)
            )
        h = self.decode(
            ComplexTensor(
                slice_axis(window.re, -2, 0, n_steps),
                slice_axis(window.im, -2, 0, n_steps),
            ),
            memory,
        )
        return self._split(self.frame_out(h)), self.gen_label_head(h)

    def parameters(self):
        out = {}
        _merge(out, "embed_enc", self.embed_enc)
        for i, layer in enumerate(self.enc_layers):
            _merge(out, f"enc{i}", layer)
        _merge(out, "label_head", self.label_head)
        if self.embed_dec is not None:
            _merge(out, "embed_dec", self.embed_dec)
            for i, layer in enumerate(self.dec_layers):
                _merge(out, f"dec{i}", layer)
            _merge(out, "frame_out", self.frame_out)
            _merge(out, "gen_label_head", self.gen_label_head)
        return out


def build_model(cfg, in_features, n_labels, rng):
    """Construct the variant named by cfg from one rng stream."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    if cfg.variant == "complex":
        return ComplexTransformer(cfg, in_features, n_labels, rng)
    return ConcatenatedTransformer(cfg, in_features, n_labels, rng)
