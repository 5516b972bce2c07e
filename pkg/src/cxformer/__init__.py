"""Complex-valued transformer for frequency-domain sequences.

Attention operates directly on complex spectra: the product Q K^T V is
expanded over real/imaginary parts into eight multi-head attention terms,
and attention scores are normalized with a min-max rescaling instead of
softmax. Everything runs on a small reverse-mode autodiff engine over
float64 numpy arrays.
"""

from .autodiff import (
    GradCheckReport, Tape, Tensor, backward, grad_check, xavier_uniform_init,
)
from .attention import (
    ComplexAttentionParams, causal_mask, complex_attention, complex_qkv_product,
    min_max_norm, multi_head, oracle_linear_complex_attention, scaled_attention,
)
from .complex_layers import (
    ComplexConv1d, ComplexFeedForward, ComplexLayerNorm, ComplexLinear,
    ComplexTensor, complex_conv1d, complex_feed_forward, complex_layer_norm,
    complex_linear, positional_encoding,
)
from .config import RunSettings, parse_config
from .errors import (
    ConfigError, CxformerError, DataFormatError, FramingError, ShapeError,
    TrainingDivergedError, VerificationError,
)
from .estimators import (
    ComplexTransformerClassifier, ConditionalSequenceGenerator, SpectrogramFramer,
)
from .model import (
    ComplexTransformer, ConcatenatedTransformer, ModelConfig, build_model,
)
from .signal import (
    SpectralDataset, Waveform, dft, idft, read_dataset, stft_frames,
    synth_device_fingerprint, synth_multitone, write_dataset,
)
from .training import (
    Adam, EpochMetrics, TaskSpec, accuracy_score, average_precision_score,
    bce_multilabel_loss, ce_loss, evaluate, load_checkpoint, load_into_model,
    save_checkpoint, split_point, train,
)

__version__ = "0.1.0"

__all__ = [
    "Adam", "ComplexAttentionParams", "ComplexConv1d", "ComplexFeedForward",
    "ComplexLayerNorm", "ComplexLinear", "ComplexTensor", "ComplexTransformer",
    "ComplexTransformerClassifier", "ConcatenatedTransformer",
    "ConditionalSequenceGenerator", "ConfigError", "CxformerError",
    "DataFormatError", "EpochMetrics", "FramingError", "GradCheckReport",
    "ModelConfig", "RunSettings", "ShapeError", "SpectralDataset",
    "SpectrogramFramer", "Tape", "TaskSpec", "Tensor",
    "TrainingDivergedError", "VerificationError", "Waveform",
    "accuracy_score", "average_precision_score", "backward",
    "bce_multilabel_loss", "build_model", "causal_mask", "ce_loss",
    "complex_attention", "complex_conv1d", "complex_feed_forward",
    "complex_layer_norm", "complex_linear", "complex_qkv_product", "dft",
    "evaluate", "grad_check", "idft", "load_checkpoint", "load_into_model",
    "min_max_norm", "multi_head", "oracle_linear_complex_attention",
    "parse_config", "positional_encoding", "read_dataset", "save_checkpoint",
    "scaled_attention", "split_point", "stft_frames",
    "synth_device_fingerprint", "synth_multitone", "train",
    "write_dataset", "xavier_uniform_init",
]
