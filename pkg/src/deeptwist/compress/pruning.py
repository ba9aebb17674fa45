"""Magnitude pruning and the gradual pruning-rate schedule."""

import math
from dataclasses import dataclass

import numpy as np

from .._validation import as_matrix, check_fraction
from ..exceptions import DomainError


def prune_count(p, n):
    """Number of elements zeroed when pruning ``n`` elements at rate ``p``.

    This is ``floor(p * n)``; products within 1e-9 of an integer are snapped
    to it so that rates like 0.29 on 100 elements prune 29, not 28.
    """
    x = p * n
    nearest = round(x)
    if abs(x - nearest) < 1e-9:
        return int(nearest)
    return int(math.floor(x))


def _smallest_indices(mags, k):
    """Flat indices of the ``k`` smallest entries, ties going to lower index."""
    if k == 0:
        return np.empty(0, dtype=np.intp)
    if k >= mags.size:
        return np.arange(mags.size)
    kth = np.partition(mags, k - 1)[k - 1]
    below = np.flatnonzero(mags < kth)
    ties = np.flatnonzero(mags == kth)[: k - below.size]
    return np.concatenate([below, ties])


def prune_distort(w, p):
    """Zero the ``floor(p * w.size)`` smallest-magnitude entries of ``w``.

    Magnitude ties are broken by flattened row-major index, lower first.
    Surviving entries are copied bit for bit.
    """
    w = as_matrix(w, "w")
    p = check_fraction(p, "pruning rate")
    out = w.copy()
    idx = _smallest_indices(np.abs(w).ravel(), prune_count(p, w.size))
    out.ravel()[idx] = 0.0
    return out


def prune_distort_global(weights, p):
    """Prune several matrices against one shared magnitude ranking.

    ``weights`` maps layer name to matrix (insertion order defines the
    concatenation order used for tie-breaking). Returns ``(pruned, sparsity)``
    where ``sparsity`` maps each name to its realised fraction of zeros.
    """
    if not weights:
        raise DomainError("prune_distort_global needs at least one matrix")
    p = check_fraction(p, "pruning rate")
    names = list(weights)
    mats = [as_matrix(weights[k], k) for k in names]
    flat = np.concatenate([np.abs(m).ravel() for m in mats])
    idx = _smallest_indices(flat, prune_count(p, flat.size))
    keep = np.ones(flat.size, dtype=bool)
    keep[idx] = False

    pruned, sparsity = {}, {}
    offset = 0
    for name, m in zip(names, mats):
        mask = keep[offset : offset + m.size].reshape(m.shape)
        offset += m.size
        out = np.where(mask, m, 0.0)
        pruned[name] = out
        sparsity[name] = float(np.count_nonzero(out == 0.0)) / out.size
    return pruned, sparsity


@dataclass(frozen=True)
class PruningSchedule:
    """Polynomial ramp of the pruning rate from ``p_i`` at ``t_i`` to ``p_f`` at ``t_f``."""

    p_i: float
    p_f: float
    t_i: int
    t_f: int
    exponent: int = 3

    def __post_init__(self):
        if not 0.0 <= self.p_i < 1.0:
            raise DomainError(f"p_i must lie in [0, 1), got {self.p_i}")
        if not 0.0 < self.p_f <= 1.0:
            raise DomainError(f"p_f must lie in (0, 1], got {self.p_f}")
        if self.p_i > self.p_f:
            raise DomainError(f"p_i ({self.p_i}) exceeds p_f ({self.p_f})")
        if self.t_i < 0 or self.t_f <= self.t_i:
            raise DomainError(f"need 0 <= t_i < t_f, got t_i={self.t_i}, t_f={self.t_f}")
        if int(self.exponent) != self.exponent or self.exponent < 1:
            raise DomainError(f"exponent must be a positive integer, got {self.exponent}")

    def rate_at(self, t):
        return schedule_rate_at(self, t)


def schedule_rate_at(s, t):
    if t < s.t_i:
        return 0.0
    if t >= s.t_f:
        return float(s.p_f)
    frac = 1.0 - (t - s.t_i) / (s.t_f - s.t_i)
    rate = s.p_f + (s.p_i - s.p_f) * frac**s.exponent
    # Rounding can push the ramp a hair past p_f near the end.
    return float(min(rate, s.p_f))
