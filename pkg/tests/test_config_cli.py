"""Config-file parsing and the command-line pipeline end to end:
synth -> train -> eval -> generate, plus the verification commands."""

import numpy as np
import pytest

from cxformer.cli import RunConfig, run
from cxformer.config import RunSettings, parse_config
from cxformer.errors import ConfigError
from cxformer.signal import read_dataset
from cxformer.training import load_checkpoint


# ------------------------------------------------------------ parsing

def test_parse_reads_values_and_comments():
    settings = parse_config(
        """
        # model size
        d_model = 16   # inline note
        n_heads = 4
        positional_encoding = false
        lr = 2e-3
        variant = concatenated-baseline
        """
    )
    assert settings.d_model == 16
    assert settings.n_heads == 4
    assert settings.positional_encoding is False
    assert settings.lr == 2e-3
    assert settings.variant == "concatenated-baseline"


def test_parse_defaults_survive_empty_text():
    settings = parse_config("")
    assert settings == RunSettings()


def test_parse_rejects_unknown_key_with_line_number():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("d_model = 8\nwidth = 3\n")


def test_parse_rejects_duplicate_key():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config("d_model = 8\nd_model = 16\n")


def test_parse_rejects_malformed_line_and_bad_value():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("d_model 8\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("epochs = soon\n")


def test_echo_round_trips_through_parser():
    settings = parse_config("d_model = 24\nnoise = 0.125\ntask = classify-sequence\nloss = ce\n")
    assert parse_config(settings.echo()) == settings


def test_validate_catches_cross_field_conflicts():
    with pytest.raises(ConfigError):
        parse_config("d_model = 10\nn_heads = 4\n").validate()
    with pytest.raises(ConfigError):
        parse_config("task = classify-sequence\n").validate()  # loss stays bce


# ------------------------------------------------------------ CLI plumbing

def _write_config(path, text):
    path.write_text(text)
    return str(path)


def _base_config(tmp_path, **overrides):
    lines = {
        "d_model": 16, "n_heads": 2, "n_encoder_layers": 1,
        "n_decoder_layers": 0, "d_ff": 32,
        "dropout_attn": 0.0, "dropout_relu": 0.0, "dropout_residual": 0.0,
        "epochs": 2, "batch_size": 8,
        "n_examples": 20, "t_len": 8, "f_bins": 9, "n_labels": 2,
    }
    lines.update(overrides)
    text = "\n".join(f"{k} = {v}" for k, v in lines.items()) + "\n"
    return _write_config(tmp_path / "run.cfg", text)


def test_cli_requires_valid_config_path(tmp_path):
    rc = RunConfig(command="synth", config_path=str(tmp_path / "missing.cfg"),
                   seed=0, output_dir=str(tmp_path / "out"))
    assert run(rc) == 2


def test_cli_rejects_bad_config_key(tmp_path):
    cfg = _write_config(tmp_path / "bad.cfg", "no_such_key = 1\n")
    rc = RunConfig(command="synth", config_path=cfg, seed=0,
                   output_dir=str(tmp_path / "out"))
    assert run(rc) == 1


def test_cli_synth_writes_dataset_and_echo(tmp_path):
    cfg = _base_config(tmp_path)
    out = tmp_path / "out"
    rc = RunConfig(command="synth", config_path=cfg, seed=3, output_dir=str(out))
    assert run(rc) == 0
    ds = read_dataset(out / "dataset.cxs")
    assert ds.frames.shape == (20, 8, 9)
    echo = (out / "config_echo.txt").read_text()
    assert "f_bins = 9" in echo
    assert "seed = 3" in echo


def test_cli_synth_is_deterministic_per_seed(tmp_path):
    cfg = _base_config(tmp_path)
    frames = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run(RunConfig("synth", cfg, 11, str(out))) == 0
        frames.append(read_dataset(out / "dataset.cxs").frames)
    assert np.array_equal(frames[0], frames[1])


def test_cli_train_eval_round_trip(tmp_path):
    data_out = tmp_path / "data"
    cfg = _base_config(tmp_path)
    assert run(RunConfig("synth", cfg, 5, str(data_out))) == 0

    train_cfg = _base_config(tmp_path, dataset=data_out / "dataset.cxs")
    train_out = tmp_path / "train"
    assert run(RunConfig("train", train_cfg, 6, str(train_out))) == 0
    assert (train_out / "checkpoint.cxk").exists()
    metrics = (train_out / "metrics.tsv").read_text().strip().splitlines()
    assert len(metrics) == 2  # one line per epoch

    eval_cfg = _base_config(
        tmp_path,
        dataset=data_out / "dataset.cxs",
        checkpoint=train_out / "checkpoint.cxk",
    )
    eval_out = tmp_path / "eval"
    assert run(RunConfig("eval", eval_cfg, 7, str(eval_out))) == 0
    report = (eval_out / "eval.txt").read_text()
    assert "loss" in report and "metric" in report


def test_cli_train_without_dataset_is_config_error(tmp_path):
    cfg = _base_config(tmp_path)
    assert run(RunConfig("train", cfg, 0, str(tmp_path / "out"))) == 1


def test_cli_eval_rebuilds_model_from_checkpoint_echo(tmp_path):
    """The checkpoint's embedded settings win over the eval-time config."""
    data_out = tmp_path / "data"
    cfg = _base_config(tmp_path)
    assert run(RunConfig("synth", cfg, 5, str(data_out))) == 0
    train_cfg = _base_config(tmp_path, dataset=data_out / "dataset.cxs")
    train_out = tmp_path / "train"
    assert run(RunConfig("train", train_cfg, 6, str(train_out))) == 0
    arrays, echo = load_checkpoint(train_out / "checkpoint.cxk")
    assert "d_model = 16" in echo
    # eval config deliberately disagrees about the model size
    eval_cfg = _base_config(
        tmp_path, d_model=64,
        dataset=data_out / "dataset.cxs",
        checkpoint=train_out / "checkpoint.cxk",
    )
    assert run(RunConfig("eval", eval_cfg, 7, str(tmp_path / "eval"))) == 0


def test_cli_generate_produces_frames_and_report(tmp_path):
    data_out = tmp_path / "data"
    gen_opts = dict(task="conditional-generate", n_decoder_layers=1,
                    t_len=10, reconstruction="true")
    cfg = _base_config(tmp_path, **gen_opts)
    assert run(RunConfig("synth", cfg, 5, str(data_out))) == 0
    train_cfg = _base_config(tmp_path, dataset=data_out / "dataset.cxs", **gen_opts)
    train_out = tmp_path / "train"
    assert run(RunConfig("train", train_cfg, 6, str(train_out))) == 0
    gen_cfg = _base_config(
        tmp_path,
        dataset=data_out / "dataset.cxs",
        checkpoint=train_out / "checkpoint.cxk",
        **gen_opts,
    )
    gen_out = tmp_path / "gen"
    assert run(RunConfig("generate", gen_cfg, 7, str(gen_out))) == 0
    generated = read_dataset(gen_out / "generated.cxs")
    assert generated.frames.shape == (20, 4, 9)  # T - ceil(0.6 * 10) frames
    assert "frame_mse" in (gen_out / "generate.txt").read_text()


def test_cli_gradcheck_and_oracle_commands(tmp_path):
    for command in ("gradcheck", "oracle"):
        out = tmp_path / command
        rc = RunConfig(command, "", 0, str(out))
        assert run(rc) == 0
        report = (out / f"{command}.txt").read_text()
        assert "PASS" in report and "FAIL " not in report
