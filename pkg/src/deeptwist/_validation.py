"""Input validation helpers used at public API boundaries."""

import numpy as np

from .exceptions import DomainError, NonFiniteError, ShapeError


def as_matrix(x, name="matrix", allow_empty=False):
    """Return ``x`` as a C-contiguous 2-D float64 array with finite entries."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0 and not allow_empty:
        raise ShapeError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return arr


def as_array(x, name="array"):
    """Like :func:`as_matrix` but accepts any non-empty shape."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.size == 0:
        raise ShapeError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return arr


def check_fraction(p, name="p", low=0.0, high=1.0):
    p = float(p)
    if not (low <= p <= high):
        raise DomainError(f"{name} must lie in [{low}, {high}], got {p}")
    return p


def check_positive_int(k, name):
    if isinstance(k, bool) or int(k) != k or int(k) < 1:
        raise DomainError(f"{name} must be a positive integer, got {k!r}")
    return int(k)
