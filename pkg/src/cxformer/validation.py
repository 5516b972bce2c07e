"""Input checks for the estimator facade.

scikit-learn's own check_array rejects complex input, so spectral frames
get their own validators. All of them return canonical dtypes/shapes or
raise ShapeError with the offending shape in the message.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def check_complex_frames(X):
    """Coerce to complex128 [n, T, F] and require finite values."""
    X = np.asarray(X)
    if X.ndim != 3:
        raise ShapeError(f"expected frames shaped [n, T, F], got {X.shape}")
    X = X.astype(np.complex128, copy=False)
    if not (np.isfinite(X.real).all() and np.isfinite(X.imag).all()):
        raise ShapeError("frames contain non-finite values")
    return X


def check_frame_labels(y, n_examples, t_len):
    """Binary multi-hot labels [n, T, L] aligned with the frames."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 3 or y.shape[0] != n_examples or y.shape[1] != t_len:
        raise ShapeError(
            f"expected labels shaped [{n_examples}, {t_len}, L], got {y.shape}"
        )
    if not np.isin(y, (0.0, 1.0)).all():
        raise ShapeError("per-frame labels must be binary")
    return y


def check_sequence_targets(y, n_examples):
    """Class targets: integer vector [n] or one-hot matrix [n, L].

    Returns (indices, n_classes_hint) where the hint is None for integer
    input (classes come from np.unique) and L for one-hot input.
    """
    y = np.asarray(y)
    if y.ndim == 1:
        if y.shape[0] != n_examples:
            raise ShapeError(f"expected {n_examples} targets, got {y.shape[0]}")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.equal(np.mod(y, 1), 0).all():
                raise ShapeError("sequence targets must be integer class indices")
            y = y.astype(int)
        return y.astype(int), None
    if y.ndim == 2:
        if y.shape[0] != n_examples:
            raise ShapeError(f"expected {n_examples} one-hot rows, got {y.shape[0]}")
        if not (np.isin(y, (0, 1)).all() and (y.sum(axis=1) == 1).all()):
            raise ShapeError("one-hot targets must have exactly one 1 per row")
        return np.argmax(y, axis=1), y.shape[1]
    raise ShapeError(f"targets must be [n] indices or [n, L] one-hot, got {y.shape}")


def check_waveform_batch(waves):
    """A [n, samples] array or a list of equal-length 1-d arrays."""
    if isinstance(waves, np.ndarray) and waves.ndim == 2:
        batch = waves.astype(np.float64, copy=False)
    else:
        rows = [np.asarray(w, dtype=np.float64) for w in waves]
        if not rows:
            raise ShapeError("empty waveform batch")
        if any(r.ndim != 1 for r in rows):
            raise ShapeError("each waveform must be 1-d")
        if len({r.size for r in rows}) != 1:
            raise ShapeError("waveforms in a batch must share a length")
        batch = np.stack(rows)
    if not np.isfinite(batch).all():
        raise ShapeError("waveforms contain non-finite samples")
    return batch
