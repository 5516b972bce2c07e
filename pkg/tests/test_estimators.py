"""Estimator facade: fit/predict/score surface, parameter round-trips,
input validation, and the spectrogram framing transformer."""

import numpy as np
import pytest

from cxformer.errors import ConfigError, ShapeError
from cxformer.estimators import (
    ComplexTransformerClassifier,
    ConditionalSequenceGenerator,
    SpectrogramFramer,
)
from cxformer.signal import synth_device_fingerprint, synth_multitone
from cxformer.validation import (
    check_complex_frames,
    check_frame_labels,
    check_sequence_targets,
    check_waveform_batch,
)


def _frame_task(rng, n=30, t=8, f=9, l=2):
    ds = synth_multitone(rng, n, t, f, l)
    return ds.frames, ds.labels


def _tiny(**kw):
    base = dict(d_model=8, n_heads=2, n_layers=1, d_ff=16,
                dropout_relu=0.0, dropout_residual=0.0, epochs=3,
                batch_size=8, seed=0)
    base.update(kw)
    return ComplexTransformerClassifier(**base)


# ------------------------------------------------------------ validation

def test_check_complex_frames_enforces_rank_and_finiteness():
    with pytest.raises(ShapeError):
        check_complex_frames(np.zeros((3, 4)))
    bad = np.zeros((2, 3, 4), complex)
    bad[0, 0, 0] = np.nan
    with pytest.raises(ShapeError):
        check_complex_frames(bad)
    ok = check_complex_frames(np.zeros((2, 3, 4)))
    assert ok.dtype == np.complex128


def test_check_frame_labels_enforces_alignment_and_binary_values():
    with pytest.raises(ShapeError):
        check_frame_labels(np.zeros((2, 5, 1)), n_examples=2, t_len=4)
    with pytest.raises(ShapeError):
        check_frame_labels(np.full((2, 4, 1), 0.5), n_examples=2, t_len=4)
    out = check_frame_labels(np.ones((2, 4, 1)), n_examples=2, t_len=4)
    assert out.shape == (2, 4, 1)


def test_check_sequence_targets_accepts_indices_and_one_hot():
    idx, hint = check_sequence_targets(np.array([0, 2, 1]), n_examples=3)
    assert idx.tolist() == [0, 2, 1] and hint is None
    idx, hint = check_sequence_targets(np.eye(3)[[1, 0, 2]], n_examples=3)
    assert idx.tolist() == [1, 0, 2] and hint == 3
    with pytest.raises(ShapeError):
        check_sequence_targets(np.array([[0.5, 0.5]]), n_examples=1)


def test_check_waveform_batch_requires_equal_lengths():
    out = check_waveform_batch([np.zeros(8), np.ones(8)])
    assert out.shape == (2, 8)
    with pytest.raises(ShapeError):
        check_waveform_batch([np.zeros(8), np.zeros(9)])


# ------------------------------------------------------------ classifier

def test_frame_classifier_fits_and_scores():
    rng = np.random.default_rng(0)
    X, y = _frame_task(rng)
    clf = _tiny(epochs=6).fit(X, y)
    scores = clf.decision_function(X)
    assert scores.shape == y.shape
    proba = clf.predict_proba(X)
    assert np.all((proba >= 0) & (proba <= 1))
    pred = clf.predict(X)
    assert set(np.unique(pred)) <= {0.0, 1.0}
    assert 0.0 <= clf.score(X, y) <= 1.0


def test_sequence_classifier_learns_separable_classes():
    rng = np.random.default_rng(1)
    ds = synth_device_fingerprint(rng, 30, 6, 5, 3, noise=0.01)
    X, y = ds.frames, ds.class_indices()
    clf = _tiny(task="sequence", epochs=12).fit(X, y)
    assert clf.classes_.tolist() == [0, 1, 2]
    assert clf.predict(X).shape == (30,)
    assert clf.score(X, y) > 0.5  # far above the 1/3 chance floor


def test_classifier_rejects_unfitted_predict():
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        _tiny().predict(np.zeros((2, 8, 9), complex))


def test_classifier_rejects_shape_drift_after_fit():
    rng = np.random.default_rng(2)
    X, y = _frame_task(rng)
    clf = _tiny().fit(X, y)
    with pytest.raises(ConfigError):
        clf.predict(np.zeros((2, 4, 9), complex))


def test_classifier_get_set_params_round_trip():
    clf = _tiny()
    params = clf.get_params()
    assert params["d_model"] == 8
    clone = ComplexTransformerClassifier(**params)
    assert clone.get_params() == params
    clf.set_params(d_model=16)
    assert clf.d_model == 16


def test_classifier_baseline_variant_fits_too():
    rng = np.random.default_rng(3)
    X, y = _frame_task(rng, n=20)
    clf = _tiny(variant="concatenated-baseline").fit(X, y)
    assert clf.decision_function(X).shape == y.shape


def test_classifier_seed_controls_reproducibility():
    rng = np.random.default_rng(4)
    X, y = _frame_task(rng, n=20)
    a = _tiny(seed=5).fit(X, y).decision_function(X)
    b = _tiny(seed=5).fit(X, y).decision_function(X)
    c = _tiny(seed=6).fit(X, y).decision_function(X)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


# ------------------------------------------------------------ generator

def test_generator_fit_generate_predict_and_score():
    rng = np.random.default_rng(5)
    ds = synth_multitone(rng, 8, 10, 9, 2)
    X, y = ds.frames, ds.labels
    gen = ConditionalSequenceGenerator(
        d_model=8, n_heads=2, n_encoder_layers=1, n_decoder_layers=1, d_ff=16,
        dropout_relu=0.0, dropout_residual=0.0, epochs=3, batch_size=4,
        seed=0).fit(X, y)
    frames = gen.generate(X)
    assert frames.shape == (8, 4, 9)  # generates T - ceil(0.6 T) frames
    assert frames.dtype == np.complex128
    label_scores = gen.predict(X)
    assert label_scores.shape == (8, 4, 2)
    assert np.isfinite(gen.score(X, y))


def test_generator_requires_enough_frames_to_split():
    gen = ConditionalSequenceGenerator(d_model=8, n_heads=2,
                                       n_encoder_layers=1, n_decoder_layers=1,
                                       d_ff=16, epochs=1, seed=0)
    with pytest.raises(ConfigError):
        gen.fit(np.zeros((2, 1, 5), complex), np.zeros((2, 1, 1)))


# ------------------------------------------------------------ framer

def test_framer_transforms_waveform_batch_to_frames():
    rng = np.random.default_rng(7)
    waves = rng.standard_normal((3, 64))
    framer = SpectrogramFramer(window=16, hop=8, t_max=5)
    frames = framer.fit(waves).transform(waves)
    assert frames.shape == (3, 5, 9)  # bins 0..window//2
    assert frames.dtype == np.complex128
    assert framer.valid_.shape == (3, 5)
    assert framer.valid_.all()


def test_framer_matches_single_waveform_function():
    from cxformer.signal import stft_frames
    rng = np.random.default_rng(8)
    wave = rng.standard_normal(40)
    framer = SpectrogramFramer(window=8, hop=4, t_max=6, window_fn="hann")
    batch = framer.fit(None).transform(wave[None, :])
    single, _ = stft_frames(wave, window=8, hop=4, t_max=6, window_fn="hann")
    assert np.array_equal(batch[0], single)


def test_framer_is_pipeline_compatible_with_classifier():
    from sklearn.pipeline import Pipeline
    rng = np.random.default_rng(9)
    waves = rng.standard_normal((12, 48))
    labels = np.array([0, 1] * 6)
    pipe = Pipeline([
        ("frames", SpectrogramFramer(window=8, hop=8, t_max=6)),
        ("clf", _tiny(task="sequence", epochs=2)),
    ])
    pipe.fit(waves, labels)
    assert pipe.predict(waves).shape == (12,)
