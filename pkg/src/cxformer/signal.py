"""Waveform framing, Fourier transforms, synthetic data, and dataset io.

Spectral datasets hold complex frames [n, T, F] with either per-frame
multi-hot labels [n, T, L] or per-sequence one-hot labels [n, L]. On disk
they use the little-endian CXS1 layout:

    magic "CXS1" | u32 version=1 | u32 n | u32 T | u32 F |
    u8 label_kind (0 per-frame, 1 per-sequence) | u32 L |
    per example: T*F f64 re, T*F f64 im, labels f64 (T*L or L) |
    u32 CRC32 of the example payload
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataFormatError, FramingError

LABEL_FRAME = "frame"
LABEL_SEQUENCE = "sequence"
_KIND_CODES = {LABEL_FRAME: 0, LABEL_SEQUENCE: 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}

_MAGIC = b"CXS1"
_HEADER = struct.Struct("<4sIIIIBI")


@dataclass
class Waveform:
    """A finite real sample sequence."""

    samples: np.ndarray
    sample_rate: float = 1.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise FramingError("waveform must be a non-empty 1-d sample array")
        if not np.isfinite(self.samples).all():
            raise FramingError("waveform contains non-finite samples")


def dft(x):
    """Forward transform X[k] = sum_t x[t] exp(-2*pi*i*k*t/N)."""
    return np.fft.fft(np.asarray(x, dtype=np.float64))


def idft(spectrum):
    """Inverse transform back to real samples (imaginary residue dropped)."""
    return np.fft.ifft(np.asarray(spectrum, dtype=np.complex128)).real


def stft_frames(samples, window, hop, t_max, window_fn="rectangular"):
    """Frame a waveform and keep one-sided spectra, bins 0..window//2.

    Frame t covers samples [t*hop, t*hop + window). The frame count is
    truncated or zero-padded to exactly t_max; the returned boolean vector
    flags which rows hold real frames.
    """
    if isinstance(samples, Waveform):
        samples = samples.samples
    samples = np.asarray(samples, dtype=np.float64)
    if window < 1 or hop < 1:
        raise ConfigError(f"window={window} and hop={hop} must be positive")
    if t_max < 0:
        raise ConfigError(f"t_max must be non-negative, got {t_max}")
    if samples.size < window:
        raise FramingError(
            f"waveform of {samples.size} samples is shorter than the {window}-sample window"
        )
    if window_fn == "rectangular":
        taper = None
    elif window_fn == "hann":
        taper = np.hanning(window)
    else:
        raise ConfigError(f"unknown window_fn '{window_fn}'")
    n_bins = window // 2 + 1
    n_full = (samples.size - window) // hop + 1
    n_keep = min(n_full, t_max)
    frames = np.zeros((t_max, n_bins), dtype=np.complex128)
    for t in range(n_keep):
        seg = samples[t * hop: t * hop + window]
        if taper is not None:
            seg = seg * taper
        frames[t] = np.fft.fft(seg)[:n_bins]
    valid = np.zeros(t_max, dtype=bool)
    valid[:n_keep] = True
    return frames, valid


@dataclass
class SpectralDataset:
    """Complex frames plus labels, the unit all tasks consume."""

    frames: np.ndarray
    labels: np.ndarray
    label_kind: str

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.complex128)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.frames.ndim != 3:
            raise DataFormatError(f"frames must be [n, T, F], got shape {self.frames.shape}")
        if self.label_kind == LABEL_FRAME:
            if self.labels.ndim != 3 or self.labels.shape[:2] != self.frames.shape[:2]:
                raise DataFormatError(
                    f"per-frame labels must be [n, T, L], got {self.labels.shape} "
                    f"for frames {self.frames.shape}"
                )
        elif self.label_kind == LABEL_SEQUENCE:
            if self.labels.ndim != 2 or self.labels.shape[0] != self.frames.shape[0]:
                raise DataFormatError(
                    f"per-sequence labels must be [n, L], got {self.labels.shape}"
                )
        else:
            raise DataFormatError(f"unknown label kind '{self.label_kind}'")

    @property
    def n_examples(self):
        return self.frames.shape[0]

    @property
    def t_len(self):
        return self.frames.shape[1]

    @property
    def f_bins(self):
        return self.frames.shape[2]

    @property
    def n_labels(self):
        return self.labels.shape[-1]

    def class_indices(self):
        if self.label_kind != LABEL_SEQUENCE:
            raise DataFormatError("class indices are defined for per-sequence labels only")
        return np.argmax(self.labels, axis=1)

    def subset(self, index):
        return SpectralDataset(self.frames[index], self.labels[index], self.label_kind)


def write_dataset(path, ds):
    n, t_len, f_bins = ds.frames.shape
    n_labels = ds.labels.shape[-1]
    header = _HEADER.pack(
        _MAGIC, 1, n, t_len, f_bins, _KIND_CODES[ds.label_kind], n_labels
    )
    chunks = []
    for i in range(n):
        chunks.append(np.ascontiguousarray(ds.frames[i].real, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(ds.frames[i].imag, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(ds.labels[i], dtype="<f8").tobytes())
    payload = b"".join(chunks)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    Path(path).write_bytes(header + payload + struct.pack("<I", crc))


def read_dataset(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, n, t_len, f_bins, kind_code, n_labels = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
    if version != 1:
        raise DataFormatError(f"{path}: unsupported version {version}")
    if kind_code not in _KIND_NAMES:
        raise DataFormatError(f"{path}: unknown label kind code {kind_code}")
    kind = _KIND_NAMES[kind_code]
    frame_vals = t_len * f_bins
    label_vals = t_len * n_labels if kind == LABEL_FRAME else n_labels
    example_bytes = (2 * frame_vals + label_vals) * 8
    expected = _HEADER.size + n * example_bytes + 4
    if len(raw) != expected:
        raise DataFormatError(
            f"{path}: expected {expected} bytes for {n} examples, found {len(raw)}"
        )
    payload = raw[_HEADER.size:-4]
    (crc_stored,) = struct.unpack_from("<I", raw, len(raw) - 4)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    if crc != crc_stored:
        raise DataFormatError(f"{path}: checksum mismatch (stored {crc_stored:#x}, computed {crc:#x})")
    frames = np.zeros((n, t_len, f_bins), dtype=np.complex128)
    label_shape = (n, t_len, n_labels) if kind == LABEL_FRAME else (n, n_labels)
    labels = np.zeros(label_shape)
    offset = 0
    for i in range(n):
        re = np.frombuffer(payload, "<f8", frame_vals, offset).reshape(t_len, f_bins)
        offset += frame_vals * 8
        im = np.frombuffer(payload, "<f8", frame_vals, offset).reshape(t_len, f_bins)
        offset += frame_vals * 8
        lab = np.frombuffer(payload, "<f8", label_vals, offset)
        offset += label_vals * 8
        frames[i] = re + 1j * im
        labels[i] = lab.reshape(label_shape[1:])
    return SpectralDataset(frames, labels, kind)


def synth_multitone(rng, n_examples, t_len, f_bins, n_tones,
                    activation=0.3, noise=0.05, amp_range=(0.5, 1.5)):
    """Sinusoid mixtures with per-frame multi-hot tone labels.

    Each of n_tones candidate bins switches on and off at random frame
    boundaries; every segment is active with probability ``activation``,
    so that is also the exact per-frame label marginal. Tones sit on
    integer bins strictly between DC and Nyquist, hence n_tones must be
    at most f_bins - 2. Frames come from a rectangular-window transform
    with hop == window == 2*(f_bins - 1).
    """
    if f_bins < 3:
        raise ConfigError(f"f_bins must be at least 3, got {f_bins}")
    if not 1 <= n_tones <= f_bins - 2:
        raise ConfigError(
            f"n_tones must be in [1, {f_bins - 2}] for {f_bins} bins, got {n_tones}"
        )
    if not 0.0 <= activation <= 1.0:
        raise ConfigError(f"activation must be a probability, got {activation}")
    window = 2 * (f_bins - 1)
    bins = np.round(np.linspace(1, f_bins - 2, n_tones)).astype(int)
    n_samples = t_len * window
    time_idx = np.arange(n_samples)
    max_seg = max(1, t_len // 4)
    frames = np.zeros((n_examples, t_len, f_bins), dtype=np.complex128)
    labels = np.zeros((n_examples, t_len, n_tones))
    for i in range(n_examples):
        wave = noise * rng.standard_normal(n_samples) if noise > 0 else np.zeros(n_samples)
        for j, k in enumerate(bins):
            t = 0
            while t < t_len:
                seg = min(int(rng.integers(1, max_seg + 1)), t_len - t)
                if rng.random() < activation:
                    labels[i, t:t + seg, j] = 1.0
                    amp = rng.uniform(*amp_range)
                    phase = rng.uniform(0.0, 2.0 * np.pi)
                    lo, hi = t * window, (t + seg) * window
                    wave[lo:hi] += amp * np.sin(
                        2.0 * np.pi * k * time_idx[lo:hi] / window + phase
                    )
                t += seg
        frames[i], _ = stft_frames(wave, window, window, t_len)
    return SpectralDataset(frames, labels, LABEL_FRAME)


def synth_device_fingerprint(rng, n_examples, t_len, f_bins, n_classes, noise=0.05):
    """Class-conditioned spectral signatures with one-hot sequence labels.

    Every example is a shared complex carrier multiplied bin-wise by its
    class signature, plus complex noise and a small per-example gain.
    Classes are assigned round-robin, so counts differ by at most one.
    """
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    carrier = rng.standard_normal((t_len, f_bins)) + 1j * rng.standard_normal((t_len, f_bins))
    signatures = [
        rng.uniform(0.5, 1.5, f_bins) * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, f_bins))
        for _ in range(n_classes)
    ]
    targets = rng.permutation(np.arange(n_examples) % n_classes)
    frames = np.zeros((n_examples, t_len, f_bins), dtype=np.complex128)
    labels = np.zeros((n_examples, n_classes))
    for i, cls in enumerate(targets):
        gain = rng.uniform(0.8, 1.2)
        jitter = noise * (
            rng.standard_normal((t_len, f_bins)) + 1j * rng.standard_normal((t_len, f_bins))
        )
        frames[i] = gain * carrier * signatures[cls][None, :] + jitter
        labels[i, cls] = 1.0
    return SpectralDataset(frames, labels, LABEL_SEQUENCE)
