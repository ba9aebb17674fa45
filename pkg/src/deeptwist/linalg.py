"""Dense real-matrix kernels: products, norms, SVD and least squares.

Matrices are plain ``numpy.ndarray`` objects (2-D, float64, row-major).
Every function validates its inputs and returns fresh arrays; inputs are
never modified.

The SVD is a one-sided Jacobi method with round-robin (Brent-Luk) pair
ordering, so that all disjoint column pairs of a round are rotated with a
single vectorised update. Tall inputs are first reduced to their square
triangular QR factor.
"""

from typing import NamedTuple

import numpy as np

from ._validation import as_matrix
from .exceptions import ConvergenceError, RankError, ShapeError

__all__ = [
    "SvdResult",
    "matmul",
    "svd",
    "least_squares",
    "frobenius_norm",
    "JACOBI_TOL",
    "MAX_SWEEPS",
    "RANK_TOL",
]

JACOBI_TOL = 1e-12
MAX_SWEEPS = 60
RANK_TOL = 1e-12


class SvdResult(NamedTuple):
    """Thin SVD ``w = u @ diag(sigma) @ vt``.

    ``u`` is m x min(m, n), ``sigma`` has length min(m, n) and is sorted in
    non-increasing order, ``vt`` is min(m, n) x n.
    """

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray
    sweeps: int

    def reconstruct(self, rank=None):
        r = len(self.sigma) if rank is None else rank
        return (self.u[:, :r] * self.sigma[:r]) @ self.vt[:r]


def matmul(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def frobenius_norm(w):
    w = as_matrix(w, "w", allow_empty=True)
    return float(np.sqrt(np.sum(w * w)))


def _round_robin(n):
    """Disjoint index pairs for each round of a cyclic tournament over n items."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        p, q = [], []
        for i in range(size // 2):
            a, b = players[i], players[size - 1 - i]
            if a >= 0 and b >= 0:
                p.append(min(a, b))
                q.append(max(a, b))
        rounds.append((np.array(p, dtype=np.intp), np.array(q, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _jacobi_tall(a):
    """One-sided Jacobi on a tall matrix (rows >= cols)."""
    m, n = a.shape
    # Rows of g are the columns of a; rows of v are the columns of V.
    g = a.T.copy()
    v = np.eye(n)
    rounds = _round_robin(n)
    for sweep in range(1, MAX_SWEEPS + 1):
        rotated = False
        for p, q in rounds:
            if p.size == 0:
                continue
            gp, gq = g[p], g[q]
            alpha = np.einsum("ij,ij->i", gp, gp)
            beta = np.einsum("ij,ij->i", gq, gq)
            gamma = np.einsum("ij,ij->i", gp, gq)
            active = np.abs(gamma) > JACOBI_TOL * np.sqrt(alpha * beta)
            if not active.any():
                continue
            rotated = True
            if not active.all():
                p, q = p[active], q[active]
                gp, gq = gp[active], gq[active]
                alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = (c * t)[:, None]
            c = c[:, None]
            g[p] = c * gp - s * gq
            g[q] = s * gp + c * gq
            vp, vq = v[p], v[q]
            v[p] = c * vp - s * vq
            v[q] = s * vp + c * vq
        if not rotated:
            return g, v, sweep
    raise ConvergenceError(
        f"Jacobi SVD did not converge within {MAX_SWEEPS} sweeps", iterations=MAX_SWEEPS
    )


def _complete_basis(u, missing):
    """Fill the columns flagged in ``missing`` with an orthonormal completion."""
    m = u.shape[0]
    basis = [u[:, j] for j in range(u.shape[1]) if not missing[j]]
    fill = []
    for i in range(m):
        if len(fill) == int(missing.sum()):
            break
        e = np.zeros(m)
        e[i] = 1.0
        for _ in range(2):
            for b in basis:
                e -= (b @ e) * b
        norm = np.linalg.norm(e)
        if norm > 0.5:
            e /= norm
            basis.append(e)
            fill.append(e)
    out = u.copy()
    out[:, missing] = np.array(fill).T
    return out


def svd(w):
    """Thin singular value decomposition of a real matrix.

    Singular vectors are sign-normalised so that the largest-magnitude entry
    of every column of ``u`` is positive.

    Raises
    ------
    ConvergenceError
        If the Jacobi iteration has not converged after ``MAX_SWEEPS`` sweeps.
    """
    w = as_matrix(w, "w")
    m, n = w.shape
    transposed = m < n
    a = w.T if transposed else w
    # Precondition with a QR factorisation: Jacobi then runs on the square
    # triangular factor, and a = q @ r carries its left vectors back.
    q, r = np.linalg.qr(a)
    g, v, sweeps = _jacobi_tall(r)

    sigma = np.sqrt(np.einsum("ij,ij->i", g, g))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    g = g[order]
    v = v[order]

    zero = sigma == 0.0
    safe = np.where(zero, 1.0, sigma)
    left = (g / safe[:, None]).T
    if zero.any():
        left = _complete_basis(left, zero)
    left = q @ left
    right = v.T

    if transposed:
        u, vt = right, left.T
    else:
        u, vt = left, right.T

    k = min(m, n)
    u = np.ascontiguousarray(u[:, :k])
    vt = np.ascontiguousarray(vt[:k])
    pivot = np.argmax(np.abs(u), axis=0)
    flip = u[pivot, np.arange(k)] < 0
    u[:, flip] *= -1.0
    vt[flip] *= -1.0
    return SvdResult(u, sigma, vt, sweeps)


def least_squares(a, b):
    """Solve ``min_X ||a @ X - b||_F`` for a full-column-rank ``a``.

    ``b`` may be 1-D, in which case a 1-D solution is returned.

    Raises
    ------
    RankError
        If the smallest singular value of ``a`` is below ``RANK_TOL`` times
        the largest (or ``a`` has more columns than rows).
    """
    a = as_matrix(a, "a")
    vector = np.ndim(b) == 1
    b = as_matrix(np.reshape(b, (-1, 1)) if vector else b, "b")
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"a has {a.shape[0]} rows but b has {b.shape[0]}")
    if a.shape[0] < a.shape[1]:
        raise RankError(f"a has more columns than rows: {a.shape}")
    f = svd(a)
    if f.sigma[0] == 0.0 or f.sigma[-1] < RANK_TOL * f.sigma[0]:
        raise RankError(
            f"a is rank deficient: sigma_min={f.sigma[-1]:.3e}, sigma_max={f.sigma[0]:.3e}"
        )
    x = f.vt.T @ ((f.u.T @ b) / f.sigma[:, None])
    return x[:, 0] if vector else x
