"""Run settings parsed from flat ``key = value`` text.

Lines may carry ``#`` comments. Unknown keys, duplicate keys, and
malformed values are hard errors that name the offending line. Every
run echoes its fully resolved settings, so a run is reproducible from
the echo and the seed alone.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError
from .model import ModelConfig
from .training import TaskSpec

SYNTH_KINDS = ("multitone", "fingerprint")
LR_SCHEDULES = ("none", "inverse-sqrt")


@dataclass
class RunSettings:
    # model
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
    # task
    task: str = "classify-frames"
    loss: str = "bce"
    encoder_fraction: float = 0.6
    reconstruction: bool = False
    # optimization
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1e-3
    lr_schedule: str = "none"
    beta1: float = 0.9
    beta2: float = 0.999
    opt_eps: float = 1e-8
    # synthetic data
    synth: str = "multitone"
    n_examples: int = 500
    t_len: int = 16
    f_bins: int = 17
    n_labels: int = 4
    activation: float = 0.3
    noise: float = 0.05
    # paths
    dataset: str = ""
    eval_dataset: str = ""
    checkpoint: str = ""

    def model_config(self):
        return ModelConfig(
            d_model=self.d_model,
            n_heads=self.n_heads,
            n_encoder_layers=self.n_encoder_layers,
            n_decoder_layers=self.n_decoder_layers,
            d_ff=self.d_ff,
            dropout_attn=self.dropout_attn,
            dropout_relu=self.dropout_relu,
            dropout_residual=self.dropout_residual,
            positional_encoding=self.positional_encoding,
            variant=self.variant,
            decoder_order=self.decoder_order,
            independent_term_weights=self.independent_term_weights,
            attention_eps=self.attention_eps,
        )

    def task_spec(self):
        return TaskSpec(
            task=self.task,
            loss=self.loss,
            encoder_fraction=self.encoder_fraction,
            reconstruction=self.reconstruction,
        )

    def validate(self):
        self.model_config().validate()
        self.task_spec().validate()
        if self.synth not in SYNTH_KINDS:
            raise ConfigError(f"synth must be one of {SYNTH_KINDS}, got '{self.synth}'")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigError(
                f"lr_schedule must be one of {LR_SCHEDULES}, got '{self.lr_schedule}'"
            )
        for name, minimum in (("epochs", 1), ("batch_size", 1), ("n_examples", 1),
                              ("t_len", 1), ("f_bins", 3), ("n_labels", 1)):
            if getattr(self, name) < minimum:
                raise ConfigError(f"{name} must be at least {minimum}, got {getattr(self, name)}")
        if self.lr <= 0 or self.opt_eps <= 0:
            raise ConfigError("lr and opt_eps must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("beta1 and beta2 must be in [0, 1)")
        if not 0.0 <= self.activation <= 1.0:
            raise ConfigError(f"activation must be a probability, got {self.activation}")
        if self.noise < 0.0:
            raise ConfigError(f"noise must be non-negative, got {self.noise}")
        return self

    def echo(self):
        """Canonical text form: every key, one per line, registry order."""
        lines = []
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{field.name} = {value}")
        return "\n".join(lines) + "\n"


def _parse_bool(text):
    lowered = text.lower()
    if lowered == "true":
        return True
    if lowered == "false":
        return False
    raise ValueError(text)


_PARSERS = {}
for _field in dataclasses.fields(RunSettings):
    if _field.type == "bool":
        _PARSERS[_field.name] = _parse_bool
    elif _field.type == "int":
        _PARSERS[_field.name] = int
    elif _field.type == "float":
        _PARSERS[_field.name] = float
    else:
        _PARSERS[_field.name] = str


def parse_config(text):
    """Parse config text into validated RunSettings."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got '{raw.strip()}'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError:
            raise ConfigError(
                f"line {lineno}: invalid value '{value}' for key '{key}'"
            ) from None
    return RunSettings(**values).validate()
