"""Weight distortion kernels: pruning, multi-bit quantization, low-rank truncation."""

from .lowrank import (
    LowRankForm,
    SharedProjection,
    compression_ratio,
    lowrank_distort,
    numerical_rank,
    shared_projection,
    truncate_to_factors,
)
from .pruning import (
    PruningSchedule,
    prune_count,
    prune_distort,
    prune_distort_global,
    schedule_rate_at,
)
from .quantization import (
    QuantizedForm,
    alternating_quantize,
    binary_quantize,
    greedy_quantize,
    quantize_distort,
    refine_alphas,
)

__all__ = [
    "LowRankForm",
    "SharedProjection",
    "compression_ratio",
    "lowrank_distort",
    "numerical_rank",
    "shared_projection",
    "truncate_to_factors",
    "PruningSchedule",
    "prune_count",
    "prune_distort",
    "prune_distort_global",
    "schedule_rate_at",
    "QuantizedForm",
    "alternating_quantize",
    "binary_quantize",
    "greedy_quantize",
    "quantize_distort",
    "refine_alphas",
]
