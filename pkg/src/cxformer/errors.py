"""Exception types shared across the package.

Each maps to a CLI exit code: ConfigError -> 1, DataFormatError -> 2,
TrainingDivergedError -> 3, VerificationError -> 4.
"""


class CxformerError(Exception):
    """Base class for all package errors."""


class ConfigError(CxformerError):
    """Invalid configuration: unknown key, bad value, inconsistent fields."""


class ShapeError(CxformerError):
    """Array arguments with incompatible or disallowed shapes."""


class DataFormatError(CxformerError):
    """Malformed dataset or checkpoint bytes."""


class FramingError(CxformerError):
    """Waveform too short for the requested analysis window."""


class TrainingDivergedError(CxformerError):
    """Loss became non-finite during training."""


class VerificationError(CxformerError):
    """A gradient or oracle self-check failed."""
