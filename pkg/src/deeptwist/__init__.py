"""DeepTwist: neural network compression by occasional weight distortion.

Training runs unmodified; every few steps each targeted layer is replaced
by its compressed-form reconstruction (pruned, quantized or low rank), and
training ends right after one last distortion so the model leaves in
compressed form.
"""

from .distortion import (
    DeepTwistConfig,
    DistortionEvent,
    DistortionHook,
    LowRankAssignment,
    PruneAssignment,
    QuantizeAssignment,
    VerificationReport,
    distort_weights,
    distortion_trace,
    make_hook,
    probe_batch,
    verify_compressed_form,
)
from .exceptions import (
    CheckpointError,
    CompressedFormError,
    ConfigError,
    ConvergenceError,
    DeepTwistError,
    DomainError,
    IdxFormatError,
    NonFiniteError,
    RankError,
    ShapeError,
)

__version__ = "0.1.0"

__all__ = [
    "DeepTwistConfig",
    "DistortionEvent",
    "DistortionHook",
    "LowRankAssignment",
    "PruneAssignment",
    "QuantizeAssignment",
    "VerificationReport",
    "distort_weights",
    "distortion_trace",
    "make_hook",
    "probe_batch",
    "verify_compressed_form",
    "CheckpointError",
    "CompressedFormError",
    "ConfigError",
    "ConvergenceError",
    "DeepTwistError",
    "DomainError",
    "IdxFormatError",
    "NonFiniteError",
    "RankError",
    "ShapeError",
]
