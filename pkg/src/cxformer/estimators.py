"""scikit-learn style facade over the transformer models.

These estimators follow the fit/predict/get_params conventions (all
constructor arguments stored verbatim, fitted state in trailing-underscore
attributes) so they compose with clone, pipelines, and grid search. The
heavy lifting stays in model.py and training.py.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import ConfigError
from .model import ModelConfig, build_model
from .signal import (
    LABEL_FRAME, LABEL_SEQUENCE, SpectralDataset, stft_frames,
)
from .training import (
    TaskSpec, accuracy_score, average_precision_score, evaluate,
    predict_scores, split_point, train,
)
from .validation import (
    check_complex_frames, check_frame_labels, check_sequence_targets,
    check_waveform_batch,
)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class ComplexTransformerClassifier(BaseEstimator, ClassifierMixin):
    """Encoder-only classifier over complex spectral frames.

    task="frames" does per-frame multi-label tagging (y is [n, T, L]
    multi-hot); task="sequence" does single-label sequence classification
    (y is [n] class indices or [n, L] one-hot).
    """

    def __init__(self, task="frames", variant="complex", d_model=32, n_heads=4,
                 n_layers=2, d_ff=64, dropout_attn=0.0, dropout_relu=0.1,
                 dropout_residual=0.1, positional_encoding=True,
                 independent_term_weights=False, epochs=10, batch_size=32,
                 lr=1e-3, seed=0):
        self.task = task
        self.variant = variant
        self.d_model = d_model
        self.n_heads = n_heads
        self.n_layers = n_layers
        self.d_ff = d_ff
        self.dropout_attn = dropout_attn
        self.dropout_relu = dropout_relu
        self.dropout_residual = dropout_residual
        self.positional_encoding = positional_encoding
        self.independent_term_weights = independent_term_weights
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    def _model_config(self):
        return ModelConfig(
            d_model=self.d_model, n_heads=self.n_heads,
            n_encoder_layers=self.n_layers, n_decoder_layers=0,
            d_ff=self.d_ff, dropout_attn=self.dropout_attn,
            dropout_relu=self.dropout_relu, dropout_residual=self.dropout_residual,
            positional_encoding=self.positional_encoding, variant=self.variant,
            independent_term_weights=self.independent_term_weights,
        )

    def fit(self, X, y):
        if self.task not in ("frames", "sequence"):
            raise ConfigError(f"task must be 'frames' or 'sequence', got '{self.task}'")
        X = check_complex_frames(X)
        n, t_len, f_bins = X.shape
        if self.task == "frames":
            labels = check_frame_labels(y, n, t_len)
            ds = SpectralDataset(X, labels, LABEL_FRAME)
            spec = TaskSpec(task="classify-frames", loss="bce")
            self.classes_ = np.arange(labels.shape[-1])
            n_out = labels.shape[-1]
        else:
            idx, n_hint = check_sequence_targets(y, n)
            self.classes_ = np.arange(n_hint) if n_hint else np.unique(idx)
            codes = np.searchsorted(self.classes_, idx)
            onehot = np.zeros((n, len(self.classes_)))
            onehot[np.arange(n), codes] = 1.0
            ds = SpectralDataset(X, onehot, LABEL_SEQUENCE)
            spec = TaskSpec(task="classify-sequence", loss="ce")
            n_out = len(self.classes_)
        model = build_model(
            self._model_config(), f_bins, n_out, np.random.default_rng((self.seed, 0))
        )
        self.history_ = train(
            ds, model, spec, self.epochs, (self.seed, 1),
            batch_size=self.batch_size, lr=self.lr,
        )
        self.model_ = model
        self.spec_ = spec
        self.t_len_ = t_len
        self.f_bins_ = f_bins
        return self

    def _scores(self, X):
        check_is_fitted(self, "model_")
        X = check_complex_frames(X)
        if X.shape[1:] != (self.t_len_, self.f_bins_):
            raise ConfigError(
                f"fitted on [T={self.t_len_}, F={self.f_bins_}] frames, got {X.shape[1:]}"
            )
        ds = SpectralDataset(
            X,
            np.zeros((X.shape[0], self.t_len_, len(self.classes_)))
            if self.task == "frames" else np.zeros((X.shape[0], len(self.classes_))),
            LABEL_FRAME if self.task == "frames" else LABEL_SEQUENCE,
        )
        return predict_scores(self.model_, self.spec_, ds)

    def decision_function(self, X):
        return self._scores(X)

    def predict_proba(self, X):
        scores = self._scores(X)
        return _sigmoid(scores) if self.task == "frames" else _softmax(scores)

    def predict(self, X):
        scores = self._scores(X)
        if self.task == "frames":
            return (scores >= 0.0).astype(float)  # logit 0 is probability 1/2
        return self.classes_[np.argmax(scores, axis=-1)]

    def score(self, X, y):
        """Average precision for frames, accuracy for sequence."""
        scores = self._scores(X)
        if self.task == "frames":
            y = check_frame_labels(y, len(scores), self.t_len_)
            return average_precision_score(y, scores)
        idx, _ = check_sequence_targets(y, len(scores))
        return accuracy_score(idx, self.classes_[np.argmax(scores, axis=-1)])


class ConditionalSequenceGenerator(BaseEstimator):
    """Encoder-decoder that continues a sequence past its conditioning span.

    fit sees full sequences; the first ceil(encoder_fraction * T) frames
    condition the encoder and the rest are generation targets. predict
    returns label scores for the generated span; generate returns the
    frames themselves (free-running decoder).
    """

    def __init__(self, variant="complex", d_model=32, n_heads=4,
                 n_encoder_layers=2, n_decoder_layers=2, d_ff=64,
                 encoder_fraction=0.6, reconstruction=True, label_loss="bce",
                 dropout_attn=0.0, dropout_relu=0.1, dropout_residual=0.1,
                 positional_encoding=True, decoder_order="ffn-before-cross",
                 epochs=20, batch_size=16, lr=1e-3, seed=0):
        self.variant = variant
        self.d_model = d_model
        self.n_heads = n_heads
        self.n_encoder_layers = n_encoder_layers
        self.n_decoder_layers = n_decoder_layers
        self.d_ff = d_ff
        self.encoder_fraction = encoder_fraction
        self.reconstruction = reconstruction
        self.label_loss = label_loss
        self.dropout_attn = dropout_attn
        self.dropout_relu = dropout_relu
        self.dropout_residual = dropout_residual
        self.positional_encoding = positional_encoding
        self.decoder_order = decoder_order
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    def _dataset(self, X, y):
        if self.label_loss == "bce":
            labels = check_frame_labels(y, X.shape[0], X.shape[1])
            return SpectralDataset(X, labels, LABEL_FRAME)
        idx, n_hint = check_sequence_targets(y, X.shape[0])
        n_classes = n_hint or int(idx.max()) + 1
        onehot = np.zeros((X.shape[0], n_classes))
        onehot[np.arange(X.shape[0]), idx] = 1.0
        return SpectralDataset(X, onehot, LABEL_SEQUENCE)

    def fit(self, X, y):
        X = check_complex_frames(X)
        ds = self._dataset(X, y)
        cfg = ModelConfig(
            d_model=self.d_model, n_heads=self.n_heads,
            n_encoder_layers=self.n_encoder_layers,
            n_decoder_layers=self.n_decoder_layers, d_ff=self.d_ff,
            dropout_attn=self.dropout_attn, dropout_relu=self.dropout_relu,
            dropout_residual=self.dropout_residual,
            positional_encoding=self.positional_encoding, variant=self.variant,
            decoder_order=self.decoder_order,
        )
        spec = TaskSpec(
            task="conditional-generate", loss=self.label_loss,
            encoder_fraction=self.encoder_fraction,
            reconstruction=self.reconstruction,
        )
        model = build_model(cfg, ds.f_bins, ds.n_labels,
                            np.random.default_rng((self.seed, 0)))
        self.history_ = train(
            ds, model, spec, self.epochs, (self.seed, 1),
            batch_size=self.batch_size, lr=self.lr,
        )
        self.model_ = model
        self.spec_ = spec
        self.t_len_ = ds.t_len
        self.f_bins_ = ds.f_bins
        self.n_labels_ = ds.n_labels
        return self

    def _check_x(self, X):
        check_is_fitted(self, "model_")
        X = check_complex_frames(X)
        if X.shape[1:] != (self.t_len_, self.f_bins_):
            raise ConfigError(
                f"fitted on [T={self.t_len_}, F={self.f_bins_}] frames, got {X.shape[1:]}"
            )
        return X

    def generate(self, X):
        """Free-run the decoder; returns complex frames [n, T - s, F]."""
        from .complex_layers import ComplexTensor

        X = self._check_x(X)
        s = split_point(self.t_len_, self.encoder_fraction)
        frames, _ = self.model_.generate_free_running(
            ComplexTensor.from_array(X[:, :s]),
            ComplexTensor.from_array(X[:, s - 1:s]),
            self.t_len_ - s,
        )
        return frames.to_array()

    def predict(self, X):
        """Label scores for the generated span."""
        X = self._check_x(X)
        kind = LABEL_FRAME if self.label_loss == "bce" else LABEL_SEQUENCE
        placeholder = (
            np.zeros((X.shape[0], self.t_len_, self.n_labels_))
            if kind == LABEL_FRAME else np.zeros((X.shape[0], self.n_labels_))
        )
        ds = SpectralDataset(X, placeholder, kind)
        return predict_scores(self.model_, self.spec_, ds)

    def score(self, X, y):
        X = self._check_x(X)
        ds = self._dataset(X, y)
        _, metric = evaluate(self.model_, self.spec_, ds)
        return metric


class SpectrogramFramer(BaseEstimator, TransformerMixin):
    """Waveform batches to fixed-size complex frame stacks [n, t_max, F]."""

    def __init__(self, window=32, hop=32, t_max=16, window_fn="rectangular"):
        self.window = window
        self.hop = hop
        self.t_max = t_max
        self.window_fn = window_fn

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        batch = check_waveform_batch(X)
        n_bins = self.window // 2 + 1
        out = np.zeros((batch.shape[0], self.t_max, n_bins), dtype=np.complex128)
        valid = np.zeros((batch.shape[0], self.t_max), dtype=bool)
        for i, wave in enumerate(batch):
            out[i], valid[i] = stft_frames(
                wave, self.window, self.hop, self.t_max, self.window_fn
            )
        self.valid_ = valid
        return out
