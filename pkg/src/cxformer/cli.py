"""Command-line entry point.

    cxformer --command synth --config run.cfg --seed 0 --out results/

Exit codes: 0 success, 1 configuration error, 2 data or file error,
3 numeric divergence during training, 4 self-check (gradient or oracle)
failure. Every command writes the resolved config echo next to its
artifacts.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunSettings, parse_config
from .diagnostics import format_report, run_gradient_suite, run_oracle_suite
from .errors import (
    ConfigError, DataFormatError, FramingError, TrainingDivergedError,
    VerificationError,
)
from .model import build_model
from .signal import (
    LABEL_SEQUENCE, SpectralDataset, read_dataset, synth_device_fingerprint,
    synth_multitone, write_dataset,
)
from .training import (
    average_precision_score, evaluate, load_checkpoint, load_into_model,
    split_point, train,
)

COMMANDS = ("synth", "train", "eval", "generate", "gradcheck", "oracle")


@dataclass
class RunConfig:
    command: str
    config_path: str
    seed: int
    output_dir: str


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="cxformer",
        description="Complex-valued transformer for frequency-domain sequences.",
    )
    parser.add_argument("--command", required=True, choices=COMMANDS)
    parser.add_argument("--config", default="", help="key = value settings file")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)
    sys.exit(run(RunConfig(args.command, args.config, args.seed, args.out)))


def run(rc):
    """Execute one command; returns the process exit code."""
    try:
        _dispatch(rc)
        return 0
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except (DataFormatError, FramingError, FileNotFoundError, IsADirectoryError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return 2
    except TrainingDivergedError as err:
        print(f"training diverged: {err}", file=sys.stderr)
        return 3
    except VerificationError as err:
        print(f"verification failed: {err}", file=sys.stderr)
        return 4


def _dispatch(rc):
    if rc.command not in COMMANDS:
        raise ConfigError(f"unknown command '{rc.command}'")
    if rc.config_path:
        settings = parse_config(Path(rc.config_path).read_text())
    else:
        settings = RunSettings().validate()
    out = Path(rc.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo = settings.echo() + f"# command = {rc.command}, seed = {rc.seed}\n"
    (out / "config_echo.txt").write_text(echo)
    handler = {
        "synth": _cmd_synth,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "generate": _cmd_generate,
        "gradcheck": _cmd_gradcheck,
        "oracle": _cmd_oracle,
    }[rc.command]
    handler(rc, settings, out, echo)


def _cmd_synth(rc, settings, out, echo):
    rng = np.random.default_rng(rc.seed)
    if settings.synth == "multitone":
        ds = synth_multitone(
            rng, settings.n_examples, settings.t_len, settings.f_bins,
            settings.n_labels, activation=settings.activation, noise=settings.noise,
        )
    else:
        ds = synth_device_fingerprint(
            rng, settings.n_examples, settings.t_len, settings.f_bins,
            settings.n_labels, noise=settings.noise,
        )
    path = out / "dataset.cxs"
    write_dataset(path, ds)
    print(f"wrote {ds.n_examples} examples [T={ds.t_len}, F={ds.f_bins}, "
          f"L={ds.n_labels}, {ds.label_kind} labels] to {path}")


def _require_dataset(settings, key="dataset"):
    path = getattr(settings, key)
    if not path:
        raise ConfigError(f"this command requires '{key} = PATH' in the config")
    return read_dataset(path)


def _cmd_train(rc, settings, out, echo):
    ds = _require_dataset(settings)
    eval_ds = read_dataset(settings.eval_dataset) if settings.eval_dataset else None
    cfg = settings.model_config()
    model = build_model(cfg, ds.f_bins, ds.n_labels, np.random.default_rng((rc.seed, 0)))
    history = train(
        ds, model, settings.task_spec(), settings.epochs, (rc.seed, 1),
        batch_size=settings.batch_size, lr=settings.lr,
        beta1=settings.beta1, beta2=settings.beta2, opt_eps=settings.opt_eps,
        lr_schedule=settings.lr_schedule, eval_dataset=eval_ds,
        checkpoint_path=out / "checkpoint.cxk", config_echo=echo,
        log_path=out / "metrics.tsv",
    )
    last = history[-1]
    print(f"epoch {last.epoch}: loss={last.loss:.6f} metric={last.metric:.6f}")


def _load_model_for(rc, settings, ds):
    if not settings.checkpoint:
        raise ConfigError("this command requires 'checkpoint = PATH' in the config")
    arrays, echo = load_checkpoint(settings.checkpoint)
    # the checkpoint's own echo defines the architecture
    saved = parse_config(echo)
    model = build_model(
        saved.model_config(), ds.f_bins, ds.n_labels, np.random.default_rng((rc.seed, 0))
    )
    load_into_model(model, arrays)
    return model, saved


def _cmd_eval(rc, settings, out, echo):
    ds = _require_dataset(settings)
    model, saved = _load_model_for(rc, settings, ds)
    loss, metric = evaluate(model, saved.task_spec(), ds)
    report = f"loss\t{loss:.6f}\nmetric\t{metric:.6f}\nn_examples\t{ds.n_examples}\n"
    (out / "eval.txt").write_text(report)
    print(report, end="")


def _cmd_generate(rc, settings, out, echo):
    ds = _require_dataset(settings)
    model, saved = _load_model_for(rc, settings, ds)
    spec = saved.task_spec()
    if spec.task != "conditional-generate":
        raise ConfigError(
            f"checkpoint was trained for '{spec.task}', not conditional generation"
        )
    s = split_point(ds.t_len, spec.encoder_fraction)
    n_steps = ds.t_len - s
    from .complex_layers import ComplexTensor

    frames_out = np.zeros((ds.n_examples, n_steps, ds.f_bins), dtype=np.complex128)
    scores = []
    for lo in range(0, ds.n_examples, 64):
        chunk = ds.frames[lo:lo + 64]
        gen, logits = model.generate_free_running(
            ComplexTensor.from_array(chunk[:, :s]),
            ComplexTensor.from_array(chunk[:, s - 1:s]),
            n_steps,
        )
        frames_out[lo:lo + 64] = gen.to_array()
        scores.append(logits.data)
    scores = np.concatenate(scores, axis=0)
    if ds.label_kind == LABEL_SEQUENCE:
        label_scores = scores.mean(axis=1)
        metric = float(np.mean(np.argmax(label_scores, -1) == ds.class_indices()))
        gen_ds = SpectralDataset(frames_out, label_scores, LABEL_SEQUENCE)
    else:
        metric = average_precision_score(ds.labels[:, s:], scores)
        gen_ds = SpectralDataset(frames_out, scores, "frame")
    write_dataset(out / "generated.cxs", gen_ds)
    mse = float(np.mean(np.abs(frames_out - ds.frames[:, s:]) ** 2))
    report = (f"generated\t{n_steps} frames from {s} conditioning frames\n"
              f"frame_mse\t{mse:.6f}\nlabel_metric\t{metric:.6f}\n")
    (out / "generate.txt").write_text(report)
    print(report, end="")


def _cmd_gradcheck(rc, settings, out, echo):
    results = run_gradient_suite(seed=rc.seed)
    _finish_checks(results, out / "gradcheck.txt", "gradient")


def _cmd_oracle(rc, settings, out, echo):
    results = run_oracle_suite(seed=rc.seed)
    _finish_checks(results, out / "oracle.txt", "oracle")


def _finish_checks(results, path, kind):
    report = format_report(results)
    path.write_text(report)
    print(report, end="")
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise VerificationError(f"{len(failed)} {kind} check(s) failed: {', '.join(failed)}")


if __name__ == "__main__":
    main()
