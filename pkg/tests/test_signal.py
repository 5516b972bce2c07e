"""Fourier transforms, waveform framing, the binary dataset container,
and the synthetic task generators."""

import numpy as np
import pytest

from cxformer.errors import ConfigError, DataFormatError, FramingError
from cxformer.signal import (
    SpectralDataset,
    Waveform,
    dft,
    idft,
    read_dataset,
    stft_frames,
    synth_device_fingerprint,
    synth_multitone,
    write_dataset,
)


def _direct_dft(x):
    """O(N^2) transform straight from the definition."""
    n = len(x)
    out = np.zeros(n, dtype=complex)
    for k in range(n):
        for t in range(n):
            out[k] += x[t] * np.exp(-2j * np.pi * k * t / n)
    return out


# ------------------------------------------------------------ waveform

def test_waveform_rejects_empty_and_non_finite():
    with pytest.raises(FramingError):
        Waveform(np.array([]))
    with pytest.raises(FramingError):
        Waveform(np.array([1.0, np.nan]))
    with pytest.raises(FramingError):
        Waveform(np.zeros((2, 2)))


# ------------------------------------------------------------ transforms

@pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 16])
def test_dft_matches_direct_sum(n):
    rng = np.random.default_rng(n)
    x = rng.standard_normal(n)
    assert np.allclose(dft(x), _direct_dft(x), atol=1e-9)


def test_dft_impulse_is_all_ones():
    x = np.zeros(8)
    x[0] = 1.0
    assert np.array_equal(dft(x), np.ones(8, dtype=complex))


def test_dft_constant_concentrates_in_dc_bin():
    out = dft(np.full(8, 3.0))
    assert out[0] == 24.0 + 0.0j
    assert np.allclose(out[1:], 0.0, atol=1e-12)


def test_dft_roundtrip_and_parseval_at_n64():
    rng = np.random.default_rng(64)
    x = rng.standard_normal(64)
    spectrum = dft(x)
    rel = np.abs(idft(spectrum) - x).max() / np.abs(x).max()
    assert rel < 1e-6
    time_energy = np.sum(x ** 2)
    freq_energy = np.sum(np.abs(spectrum) ** 2) / 64
    assert abs(time_energy - freq_energy) / time_energy < 1e-6


# ------------------------------------------------------------ framing

def test_stft_frames_cover_hop_spaced_windows():
    samples = np.arange(10.0)
    frames, valid = stft_frames(samples, window=4, hop=2, t_max=4)
    assert frames.shape == (4, 3)  # bins 0..window//2
    assert valid.tolist() == [True, True, True, True]
    for t in range(4):
        seg = samples[2 * t: 2 * t + 4]
        assert np.allclose(frames[t], np.fft.fft(seg)[:3], atol=1e-12)


def test_stft_zero_pads_short_tails():
    frames, valid = stft_frames(np.arange(6.0), window=4, hop=2, t_max=5)
    assert valid.tolist() == [True, True, False, False, False]
    assert np.array_equal(frames[2:], np.zeros((3, 3), complex))


def test_stft_truncates_long_waveforms():
    frames, valid = stft_frames(np.arange(100.0), window=4, hop=2, t_max=3)
    assert frames.shape == (3, 3)
    assert valid.all()


def test_stft_rejects_waveform_shorter_than_window():
    with pytest.raises(FramingError):
        stft_frames(np.arange(3.0), window=4, hop=2, t_max=2)


def test_stft_hann_window_tapers_segments():
    samples = np.ones(8)
    frames, _ = stft_frames(samples, window=4, hop=4, t_max=2, window_fn="hann")
    expected = np.fft.fft(np.hanning(4))[:3]
    assert np.allclose(frames[0], expected, atol=1e-12)


def test_stft_rejects_unknown_window_fn():
    with pytest.raises(ConfigError):
        stft_frames(np.arange(8.0), window=4, hop=2, t_max=2, window_fn="kaiser")


# ------------------------------------------------------------ container

def _toy_dataset(rng, kind="frame"):
    frames = rng.standard_normal((3, 4, 5)) + 1j * rng.standard_normal((3, 4, 5))
    if kind == "frame":
        labels = (rng.random((3, 4, 2)) < 0.5).astype(np.float64)
    else:
        labels = np.eye(3)[rng.integers(0, 3, size=3)].astype(np.float64)
    return SpectralDataset(frames, labels, kind)


def test_dataset_round_trips_through_file(tmp_path):
    rng = np.random.default_rng(0)
    for kind in ("frame", "sequence"):
        ds = _toy_dataset(rng, kind)
        path = tmp_path / f"{kind}.cxs"
        write_dataset(path, ds)
        back = read_dataset(path)
        assert back.label_kind == kind
        assert np.array_equal(back.frames, ds.frames)
        assert np.array_equal(back.labels, ds.labels)


def test_dataset_rejects_wrong_magic(tmp_path):
    path = tmp_path / "bad.cxs"
    path.write_bytes(b"NOPE" + bytes(60))
    with pytest.raises(DataFormatError):
        read_dataset(path)


def test_dataset_rejects_flipped_payload_bit(tmp_path):
    rng = np.random.default_rng(1)
    path = tmp_path / "corrupt.cxs"
    write_dataset(path, _toy_dataset(rng))
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0x01
    path.write_bytes(bytes(blob))
    with pytest.raises(DataFormatError):
        read_dataset(path)


def test_dataset_rejects_truncated_file(tmp_path):
    rng = np.random.default_rng(2)
    path = tmp_path / "short.cxs"
    write_dataset(path, _toy_dataset(rng))
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 8])
    with pytest.raises(DataFormatError):
        read_dataset(path)


def test_dataset_validates_label_alignment():
    rng = np.random.default_rng(3)
    frames = rng.standard_normal((3, 4, 5)) + 0j
    with pytest.raises(DataFormatError):
        SpectralDataset(frames, np.zeros((2, 4, 1)), "frame")
    with pytest.raises(DataFormatError):
        SpectralDataset(frames, np.zeros((3, 9, 1)), "frame")


def test_dataset_subset_selects_examples():
    rng = np.random.default_rng(4)
    ds = _toy_dataset(rng)
    sub = ds.subset(np.array([2, 0]))
    assert sub.n_examples == 2
    assert np.array_equal(sub.frames[0], ds.frames[2])
    assert np.array_equal(sub.labels[1], ds.labels[0])


# ------------------------------------------------------------ synthesis

def test_multitone_shapes_and_label_kind():
    ds = synth_multitone(np.random.default_rng(5), 10, 12, 9, 3)
    assert ds.frames.shape == (10, 12, 9)
    assert ds.labels.shape == (10, 12, 3)
    assert ds.label_kind == "frame"
    assert set(np.unique(ds.labels)) <= {0.0, 1.0}


def test_multitone_energy_lands_in_labeled_bins():
    ds = synth_multitone(np.random.default_rng(6), 20, 16, 17, 4, noise=0.0)
    window = 2 * (17 - 1)
    bins = np.rint(np.linspace(1, 15, 4)).astype(int)
    mags = np.abs(ds.frames)
    on = ds.labels.astype(bool)
    for tone, b in enumerate(bins):
        active = mags[:, :, b][on[:, :, tone]]
        silent = mags[:, :, b][~on[:, :, tone]]
        if active.size and silent.size:
            assert active.mean() > 10 * max(silent.mean(), 1e-12)


def test_multitone_is_deterministic_per_seed():
    a = synth_multitone(np.random.default_rng(7), 4, 8, 9, 2)
    b = synth_multitone(np.random.default_rng(7), 4, 8, 9, 2)
    assert np.array_equal(a.frames, b.frames)
    assert np.array_equal(a.labels, b.labels)


def test_multitone_rejects_too_many_tones():
    with pytest.raises(ConfigError):
        synth_multitone(np.random.default_rng(8), 4, 8, 5, 4)  # max is F-2


def test_fingerprint_labels_are_one_hot_and_balanced():
    ds = synth_device_fingerprint(np.random.default_rng(9), 12, 8, 5, 3)
    assert ds.label_kind == "sequence"
    assert ds.labels.shape == (12, 3)
    assert np.array_equal(ds.labels.sum(axis=1), np.ones(12))
    counts = ds.labels.sum(axis=0)
    assert counts.min() == 4 and counts.max() == 4  # round-robin classes


def test_fingerprint_classes_are_separable_by_signature():
    ds = synth_device_fingerprint(np.random.default_rng(10), 30, 8, 5, 3,
                                  noise=0.0)
    idx = ds.class_indices()
    mean_by_class = [np.abs(ds.frames[idx == c]).mean(axis=(0, 1))
                     for c in range(3)]
    for a in range(3):
        for b in range(a + 1, 3):
            assert not np.allclose(mean_by_class[a], mean_by_class[b], rtol=0.05)
