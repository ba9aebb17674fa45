"""Rank-r truncation via SVD, factored storage, and shared-projection factoring."""

from dataclasses import dataclass

import numpy as np

from .._validation import as_matrix
from ..exceptions import DomainError, ShapeError
from ..linalg import least_squares, svd


def _check_rank(r, m, n):
    if isinstance(r, bool) or int(r) != r or not 1 <= int(r) <= min(m, n):
        raise DomainError(f"rank must be an integer in [1, {min(m, n)}], got {r!r}")
    return int(r)


def compression_ratio(m, n, r):
    """Dense element count over factored element count, ``mn / (r (m + n))``."""
    return (m * n) / (r * (m + n))


@dataclass
class LowRankForm:
    """``w ~ u_trunc @ vt_trunc`` with ``u_trunc`` m x r and ``vt_trunc`` r x n."""

    u_trunc: np.ndarray
    vt_trunc: np.ndarray
    rank: int
    sigma_tail: np.ndarray

    @property
    def shape(self):
        return self.u_trunc.shape[0], self.vt_trunc.shape[1]

    @property
    def n_params(self):
        m, n = self.shape
        return self.rank * (m + n)

    def compression_ratio(self):
        m, n = self.shape
        return compression_ratio(m, n, self.rank)

    def reconstruct(self):
        return self.u_trunc @ self.vt_trunc


@dataclass
class SharedProjection:
    """Two matrices factored over one shared projection ``vt_shared``.

    ``w_h ~ z_h @ vt_shared`` (its own truncated SVD) and
    ``w_x ~ z_x @ vt_shared`` (least-squares fit onto the same rows).
    """

    z_x: np.ndarray
    z_h: np.ndarray
    vt_shared: np.ndarray

    def reconstruct_x(self):
        return self.z_x @ self.vt_shared

    def reconstruct_h(self):
        return self.z_h @ self.vt_shared


def truncate_to_factors(w, r):
    w = as_matrix(w, "w")
    r = _check_rank(r, *w.shape)
    f = svd(w)
    return LowRankForm(
        u_trunc=f.u[:, :r] * f.sigma[:r],
        vt_trunc=f.vt[:r].copy(),
        rank=r,
        sigma_tail=f.sigma[r:].copy(),
    )


def lowrank_distort(w, r):
    """Best rank-``r`` approximation of ``w`` in the Frobenius norm, same shape as ``w``."""
    return truncate_to_factors(w, r).reconstruct()


def shared_projection(w_x, w_h, r):
    """Factor ``w_h`` by truncated SVD and fit ``w_x`` onto its leading right vectors.

    ``z_x`` is the general least-squares solution of
    ``min_Y ||Y @ vt_shared - w_x||_F``.
    """
    w_x = as_matrix(w_x, "w_x")
    w_h = as_matrix(w_h, "w_h")
    if w_x.shape[1] != w_h.shape[1]:
        raise ShapeError(f"w_x and w_h need equal column counts, got {w_x.shape} and {w_h.shape}")
    r = _check_rank(r, min(w_x.shape[0], w_h.shape[0]), w_h.shape[1])
    h = truncate_to_factors(w_h, r)
    # Y V = W_x  <=>  V^T Y^T = W_x^T
    z_x = least_squares(h.vt_trunc.T, w_x.T).T
    return SharedProjection(z_x=z_x, z_h=h.u_trunc, vt_shared=h.vt_trunc)


def numerical_rank(w, rel_tol=1e-10):
    """Number of singular values above ``rel_tol`` times the largest."""
    sigma = svd(w).sigma
    if sigma[0] == 0.0:
        return 0
    return int(np.count_nonzero(sigma > rel_tol * sigma[0]))
