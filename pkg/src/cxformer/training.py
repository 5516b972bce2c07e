"""Losses, metrics, Adam, the training loop, and checkpoints.

Both losses are computed in log-space from raw logits, so extreme scores
cannot overflow: binary cross-entropy is mean(softplus(z) - y*z) and
cross-entropy is mean(logsumexp(z) - z[target]).
"""

from __future__ import annotations

import math
import struct
import time
import zlib
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .autodiff import (
    Tensor, Tape, add, backward, logsumexp, mean, mul, reduce_sum, scale,
    softplus, sub,
)
from .complex_layers import ComplexTensor, complex_mse
from .errors import ConfigError, DataFormatError, TrainingDivergedError
from .signal import LABEL_FRAME, LABEL_SEQUENCE

TASKS = ("classify-frames", "classify-sequence", "conditional-generate")


def bce_multilabel_loss(logits, targets):
    """Mean over every (position, label) cell of softplus(z) - y*z."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != logits.shape:
        raise ConfigError(f"bce: targets {targets.shape} vs logits {logits.shape}")
    cells = sub(softplus(logits), mul(logits, Tensor(targets)))
    return scale(reduce_sum(cells), 1.0 / max(logits.size, 1))


def ce_loss(logits, targets):
    """Mean of logsumexp(z) - z[target] over all leading positions."""
    targets = np.asarray(targets)
    if targets.shape != logits.shape[:-1]:
        raise ConfigError(f"ce: targets {targets.shape} vs logits {logits.shape}")
    n_classes = logits.shape[-1]
    if targets.size and (targets.min() < 0 or targets.max() >= n_classes):
        raise ConfigError(f"ce: target indices outside [0, {n_classes})")
    onehot = np.zeros(logits.shape)
    np.put_along_axis(onehot, targets[..., None].astype(int), 1.0, axis=-1)
    picked = reduce_sum(mul(logits, Tensor(onehot)), axis=-1)
    per_pos = sub(logsumexp(logits), picked)
    return scale(reduce_sum(per_pos), 1.0 / max(per_pos.size, 1))


def average_precision_score(y_true, scores):
    """Micro-averaged average precision with stable descending tie order.

    All label cells are pooled and ranked by score, ties keeping their
    original order; AP is the mean over positives of precision at each
    hit. The mean of rationals k/rank is computed exactly over a common
    denominator and rounded to float once, so the result is bit-identical
    to any exact reference. No positives anywhere gives 0.0 by convention.
    """
    y = np.asarray(y_true).reshape(-1) > 0.5
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if y.shape != s.shape:
        raise ConfigError(f"average_precision: {y.shape} labels vs {s.shape} scores")
    if y.size == 0 or not y.any():
        return 0.0
    order = np.argsort(-s, kind="stable")
    ranks = (np.nonzero(y[order])[0] + 1).tolist()
    common = math.lcm(*ranks)
    numerator = sum(k * (common // r) for k, r in enumerate(ranks, start=1))
    return float(Fraction(numerator, common * len(ranks)))


def accuracy_score(y_true, y_pred):
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ConfigError(f"accuracy: {y_true.shape} vs {y_pred.shape}")
    return float(np.mean(y_true == y_pred)) if y_true.size else 0.0


class Adam:
    """Adam with bias correction: step = lr * m_hat / (sqrt(v_hat) + eps)."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0 or eps <= 0:
            raise ConfigError(f"Adam: lr={lr} and eps={eps} must be positive")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ConfigError(f"Adam: betas must be in [0, 1), got {beta1}, {beta2}")
        if not isinstance(params, dict):
            params = {str(i): p for i, p in enumerate(params)}
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for key, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise TrainingDivergedError(f"non-finite gradient in parameter '{key}'")
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * g * g
            m_hat = self.m[key] / c1
            v_hat = self.v[key] / c2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(opt):
    opt.step()


@dataclass
class TaskSpec:
    """What to optimize: the task, its loss, and generation options."""

    task: str = "classify-frames"
    loss: str = "bce"
    encoder_fraction: float = 0.6
    reconstruction: bool = False

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got '{self.task}'")
        if self.loss not in ("bce", "ce"):
            raise ConfigError(f"loss must be 'bce' or 'ce', got '{self.loss}'")
        if self.task == "classify-frames" and self.loss != "bce":
            raise ConfigError("classify-frames uses multi-hot labels and needs loss = bce")
        if self.task == "classify-sequence" and self.loss != "ce":
            raise ConfigError("classify-sequence uses one-hot labels and needs loss = ce")
        if not 0.0 < self.encoder_fraction < 1.0:
            raise ConfigError(
                f"encoder_fraction must be in (0, 1), got {self.encoder_fraction}"
            )
        return self

    def check_dataset(self, ds):
        need = LABEL_FRAME if self.loss == "bce" else LABEL_SEQUENCE
        if ds.label_kind != need:
            raise ConfigError(
                f"task '{self.task}' with loss '{self.loss}' needs {need} labels, "
                f"dataset has {ds.label_kind}"
            )


def split_point(t_len, fraction):
    """First decoder frame index: ceil(fraction * T), kept inside (0, T)."""
    if t_len < 2:
        raise ConfigError(f"sequence length {t_len} too short to split")
    s = math.ceil(fraction * t_len)
    return min(max(s, 1), t_len - 1)


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    metric: float
    wall_seconds: float

    def line(self):
        return f"{self.epoch}\t{self.loss:.6f}\t{self.metric:.6f}\t{self.wall_seconds:.3f}"


def format_metrics_log(history):
    return "".join(m.line() + "\n" for m in history)


def _ct(frames):
    return ComplexTensor.from_array(frames)


def _generation_views(frames, spec):
    s = split_point(frames.shape[1], spec.encoder_fraction)
    enc = frames[:, :s]
    dec_in = frames[:, s - 1:-1]  # teacher forcing, shifted right by one
    target = frames[:, s:]
    return s, enc, dec_in, target


def _batch_loss(model, spec, frames, labels, label_kind, training, rng):
    """Taped loss for one batch; frames/labels are numpy slices."""
    if spec.task == "classify-frames":
        logits = model.frame_logits(_ct(frames), training, rng)
        return bce_multilabel_loss(logits, labels)
    if spec.task == "classify-sequence":
        logits = model.sequence_logits(_ct(frames), training, rng)
        return ce_loss(logits, np.argmax(labels, axis=-1))
    s, enc, dec_in, target = _generation_views(frames, spec)
    frames_out, step_logits = model.generate_teacher_forced(
        _ct(enc), _ct(dec_in), training, rng
    )
    if label_kind == LABEL_FRAME:
        loss = bce_multilabel_loss(step_logits, labels[:, s:])
    else:
        pooled = mean(step_logits, axis=-2)
        loss = ce_loss(pooled, np.argmax(labels, axis=-1))
    if spec.reconstruction:
        loss = add(loss, complex_mse(frames_out, ComplexTensor.from_array(target)))
    return loss


def predict_scores(model, spec, ds, batch_size=64):
    """Label scores in eval mode; generation free-runs the decoder."""
    outs = []
    for lo in range(0, ds.n_examples, batch_size):
        frames = ds.frames[lo:lo + batch_size]
        if spec.task == "classify-frames":
            outs.append(model.frame_logits(_ct(frames)).data)
        elif spec.task == "classify-sequence":
            outs.append(model.sequence_logits(_ct(frames)).data)
        else:
            s = split_point(frames.shape[1], spec.encoder_fraction)
            _, logits = model.generate_free_running(
                _ct(frames[:, :s]), _ct(frames[:, s - 1:s]), frames.shape[1] - s
            )
            if ds.label_kind == LABEL_SEQUENCE:
                logits = mean(logits, axis=-2)
            outs.append(logits.data)
    return np.concatenate(outs, axis=0)


def evaluate(model, spec, ds, batch_size=64):
    """(loss, metric) without dropout; loss is teacher-forced, the metric
    uses free-running outputs for generation tasks."""
    total, n_seen = 0.0, 0
    for lo in range(0, ds.n_examples, batch_size):
        frames = ds.frames[lo:lo + batch_size]
        labels = ds.labels[lo:lo + batch_size]
        loss = _batch_loss(model, spec, frames, labels, ds.label_kind, False, None)
        total += float(loss.data) * frames.shape[0]
        n_seen += frames.shape[0]
    scores = predict_scores(model, spec, ds, batch_size)
    if spec.task == "conditional-generate" and ds.label_kind == LABEL_FRAME:
        s = split_point(ds.t_len, spec.encoder_fraction)
        truth = ds.labels[:, s:]
    else:
        truth = ds.labels
    if spec.loss == "bce":
        metric = average_precision_score(truth, scores)
    else:
        metric = accuracy_score(np.argmax(truth, axis=-1), np.argmax(scores, axis=-1))
    return total / max(n_seen, 1), metric


def train(dataset, model, spec, epochs, seed, batch_size=32, lr=1e-3,
          beta1=0.9, beta2=0.999, opt_eps=1e-8, lr_schedule="none",
          eval_dataset=None, checkpoint_path=None, config_echo="",
          log_path=None):
    """Run Adam over shuffled minibatches; returns per-epoch metrics.

    Identical dataset, model init, and seed give an identical metrics log
    up to the wall_seconds column. A non-finite loss aborts with
    TrainingDivergedError after writing the last completed epoch's
    parameters to checkpoint_path (when given).
    """
    spec.validate()
    spec.check_dataset(dataset)
    if eval_dataset is not None:
        spec.check_dataset(eval_dataset)
    if lr_schedule not in ("none", "inverse-sqrt"):
        raise ConfigError(f"unknown lr_schedule '{lr_schedule}'")
    if dataset.n_examples == 0:
        raise ConfigError("cannot train on an empty dataset")
    root = np.random.default_rng(seed)
    shuffle_rng, dropout_rng = root.spawn(2)
    opt = Adam(model.parameters(), lr=lr, beta1=beta1, beta2=beta2, eps=opt_eps)
    snapshot = {k: p.data.copy() for k, p in opt.params.items()}
    history = []
    step = 0
    log_file = open(log_path, "w") if log_path else None
    try:
        for epoch in range(1, epochs + 1):
            t0 = time.perf_counter()
            order = shuffle_rng.permutation(dataset.n_examples)
            total, n_seen = 0.0, 0
            for lo in range(0, dataset.n_examples, batch_size):
                idx = order[lo:lo + batch_size]
                frames = dataset.frames[idx]
                labels = dataset.labels[idx]
                with Tape() as tape:
                    loss = _batch_loss(
                        model, spec, frames, labels, dataset.label_kind, True, dropout_rng
                    )
                    loss_val = float(loss.data)
                    if not np.isfinite(loss_val):
                        if checkpoint_path:
                            save_checkpoint(checkpoint_path, _as_tensors(snapshot), config_echo)
                        raise TrainingDivergedError(
                            f"loss became non-finite in epoch {epoch}"
                        )
                    opt.zero_grad()
                    backward(loss, tape)
                step += 1
                if lr_schedule == "inverse-sqrt":
                    opt.lr = lr / math.sqrt(step)
                opt.step()
                total += loss_val * len(idx)
                n_seen += len(idx)
            _, metric = evaluate(model, spec, eval_dataset if eval_dataset is not None else dataset)
            entry = EpochMetrics(
                epoch, total / n_seen, metric, time.perf_counter() - t0
            )
            history.append(entry)
            if log_file:
                log_file.write(entry.line() + "\n")
                log_file.flush()
            snapshot = {k: p.data.copy() for k, p in opt.params.items()}
    finally:
        if log_file:
            log_file.close()
    if checkpoint_path:
        save_checkpoint(checkpoint_path, opt.params, config_echo)
    return history


def _as_tensors(arrays):
    return {k: Tensor(v) for k, v in arrays.items()}


# -- checkpoints ----------------------------------------------------------

_CK_MAGIC = b"CXK1"


def save_checkpoint(path, params, config_echo=""):
    """Versioned dump of named parameter arrays with shapes and a CRC."""
    echo = config_echo.encode("utf-8")
    body = [struct.pack("<II", 1, len(echo)), echo, struct.pack("<I", len(params))]
    for name, p in params.items():
        data = p.data if isinstance(p, Tensor) else np.asarray(p)
        nb = name.encode("utf-8")
        body.append(struct.pack("<I", len(nb)))
        body.append(nb)
        body.append(struct.pack("<I", data.ndim))
        body.append(struct.pack(f"<{data.ndim}I", *data.shape))
        body.append(np.ascontiguousarray(data, dtype="<f8").tobytes())
    blob = b"".join(body)
    crc = zlib.crc32(blob) & 0xFFFFFFFF
    Path(path).write_bytes(_CK_MAGIC + blob + struct.pack("<I", crc))


def load_checkpoint(path):
    """Returns (name -> array dict, config echo text)."""
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != _CK_MAGIC:
        raise DataFormatError(f"{path}: not a checkpoint file")
    blob = raw[4:-4]
    (crc_stored,) = struct.unpack_from("<I", raw, len(raw) - 4)
    if zlib.crc32(blob) & 0xFFFFFFFF != crc_stored:
        raise DataFormatError(f"{path}: checkpoint checksum mismatch")
    try:
        off = 0
        version, echo_len = struct.unpack_from("<II", blob, off)
        off += 8
        if version != 1:
            raise DataFormatError(f"{path}: unsupported checkpoint version {version}")
        echo = blob[off:off + echo_len].decode("utf-8")
        off += echo_len
        (n_params,) = struct.unpack_from("<I", blob, off)
        off += 4
        arrays = {}
        for _ in range(n_params):
            (name_len,) = struct.unpack_from("<I", blob, off)
            off += 4
            name = blob[off:off + name_len].decode("utf-8")
            off += name_len
            (ndim,) = struct.unpack_from("<I", blob, off)
            off += 4
            shape = struct.unpack_from(f"<{ndim}I", blob, off)
            off += 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            arrays[name] = np.frombuffer(blob, "<f8", count, off).reshape(shape).copy()
            off += count * 8
    except struct.error as err:
        raise DataFormatError(f"{path}: truncated checkpoint ({err})") from None
    return arrays, echo


def load_into_model(model, arrays):
    params = model.parameters()
    missing = set(params) - set(arrays)
    extra = set(arrays) - set(params)
    if missing or extra:
        raise DataFormatError(
            f"checkpoint does not match model: missing {sorted(missing)[:3]}, "
            f"unexpected {sorted(extra)[:3]}"
        )
    for name, p in params.items():
        if arrays[name].shape != p.data.shape:
            raise DataFormatError(
                f"parameter '{name}': checkpoint shape {arrays[name].shape} "
                f"vs model shape {p.data.shape}"
            )
        p.data[...] = arrays[name]
