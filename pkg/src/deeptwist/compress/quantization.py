"""Multi-bit binary-coding quantization: ``w ~ sum_i alpha_i * b_i``, ``b_i in {-1, +1}``.

Three quantizers are provided, in increasing cost and decreasing error:

* :func:`greedy_quantize` fits one bit plane at a time to the residue of the
  previous ones.
* :func:`refine_alphas` keeps the bit planes and re-solves all coefficients
  jointly by least squares.
* :func:`alternating_quantize` alternates nearest-codebook bit assignment
  and coefficient re-solving until the error stops improving.

With ``granularity="per_row"`` every row of a matrix gets its own set of
coefficients; the default ``"whole"`` uses one set for the whole array.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .._validation import as_array, check_positive_int
from ..exceptions import DomainError, RankError
from ..linalg import least_squares

GRANULARITIES = ("whole", "per_row")
METHODS = ("greedy", "alternating")

ALT_REL_TOL = 1e-6
ALT_MAX_ITER = 100


@dataclass
class QuantizedForm:
    """Bit planes and coefficients of a k-bit binary-coded array.

    ``alphas`` has shape ``(k,)`` for whole-array granularity and
    ``(k, rows)`` for per-row granularity. ``bit_planes`` has shape
    ``(k, *source_shape)`` with int8 entries in {-1, +1}.
    """

    alphas: np.ndarray
    bit_planes: np.ndarray
    granularity: str = "whole"
    status: str = "ok"
    iterations: int = 0
    mse_history: list = field(default_factory=list)

    @property
    def num_bits(self):
        return self.bit_planes.shape[0]

    @property
    def shape(self):
        return self.bit_planes.shape[1:]

    def reconstruct(self):
        planes = self.bit_planes.astype(np.float64)
        if self.granularity == "whole":
            return np.tensordot(self.alphas, planes, axes=1)
        return np.einsum("kr,krc->rc", self.alphas, planes)

    def codebook(self):
        """Sorted distinct representable values (one row per group for per-row)."""
        alphas = self.alphas.reshape(self.num_bits, -1)
        books = [np.unique(_patterns(self.num_bits) @ alphas[:, g]) for g in range(alphas.shape[1])]
        return books[0] if self.granularity == "whole" else books

    def mse(self, w):
        diff = np.asarray(w, dtype=np.float64) - self.reconstruct()
        return float(np.mean(diff * diff))


def _patterns(k):
    """All sign vectors of length k in lexicographic order (-1 before +1)."""
    return np.array(list(itertools.product((-1.0, 1.0), repeat=k)))


def _sign(x):
    return np.where(x >= 0, 1, -1).astype(np.int8)


def _groups(w, granularity):
    """View ``w`` as a (groups, n) matrix for the requested granularity."""
    if granularity not in GRANULARITIES:
        raise DomainError(f"granularity must be one of {GRANULARITIES}, got {granularity!r}")
    if granularity == "whole":
        return w.reshape(1, -1)
    if w.ndim != 2:
        raise DomainError("per_row granularity needs a 2-D matrix")
    return w


def _form(alphas, planes, shape, granularity, **kw):
    """Pack group-shaped alphas (k, g) and planes (k, g, n) into a QuantizedForm."""
    k = planes.shape[0]
    planes = planes.reshape((k,) + tuple(shape))
    if granularity == "whole":
        alphas = alphas[:, 0].copy()
    return QuantizedForm(alphas, planes, granularity, **kw)


def _unpack(q):
    k = q.num_bits
    groups = 1 if q.granularity == "whole" else q.shape[0]
    return q.alphas.reshape(k, groups).astype(np.float64), q.bit_planes.reshape(k, groups, -1)


def _group_sse(g, alphas, planes):
    recon = np.einsum("kg,kgn->gn", alphas, planes.astype(np.float64))
    diff = g - recon
    return np.einsum("gn,gn->g", diff, diff)


def binary_quantize(w):
    """One-bit quantization: ``b = sign(w)`` (sign(0) = +1) and ``alpha = mean(|w|)``."""
    return greedy_quantize(w, 1)


def greedy_quantize(w, k, granularity="whole"):
    """Fit ``k`` bit planes one at a time, each to the residue of the previous ones."""
    w = as_array(w, "w")
    k = check_positive_int(k, "k")
    g = _groups(w, granularity)
    n = g.shape[1]
    residue = g.copy()
    alphas = np.empty((k, g.shape[0]))
    planes = np.empty((k,) + g.shape, dtype=np.int8)
    for i in range(k):
        b = _sign(residue)
        a = np.einsum("gn,gn->g", residue, b) / n
        residue -= a[:, None] * b
        alphas[i] = a
        planes[i] = b
    sse = float(np.sum(residue * residue))
    return _form(alphas, planes, w.shape, granularity, mse_history=[sse / w.size])


def _solve_alphas(g, alphas, planes):
    """Least-squares coefficients per group; degenerate groups keep their alphas."""
    out = alphas.copy()
    degenerate = False
    k = planes.shape[0]
    for j in range(g.shape[0]):
        basis = planes[:, j, :].T.astype(np.float64)
        try:
            out[:, j] = least_squares(basis, g[j]) if k > 1 else (basis[:, 0] @ g[j]) / g.shape[1]
        except RankError:
            degenerate = True
    # Rounding must not let the "refined" error exceed the input's.
    worse = _group_sse(g, out, planes) > _group_sse(g, alphas, planes)
    out[:, worse] = alphas[:, worse]
    return out, degenerate


def refine_alphas(q, w):
    """Re-solve all coefficients of ``q`` jointly by least squares against ``w``.

    If the stacked bit planes are linearly dependent the input coefficients
    are kept and ``status`` is set to ``"degenerate-planes"``.
    """
    w = as_array(w, "w")
    if w.shape != q.shape:
        raise DomainError(f"w has shape {w.shape}, quantized form has {q.shape}")
    g = _groups(w, q.granularity)
    alphas, planes = _unpack(q)
    new, degenerate = _solve_alphas(g, alphas, planes)
    mse = float(np.sum(_group_sse(g, new, planes))) / w.size
    return _form(
        new,
        planes.copy(),
        w.shape,
        q.granularity,
        status="degenerate-planes" if degenerate else "ok",
        iterations=q.iterations,
        mse_history=list(q.mse_history) + [mse],
    )


def _assign(x, alphas, current):
    """Nearest-codebook bit patterns for one group.

    A weight whose current pattern already attains the nearest value keeps
    it; otherwise, among patterns sharing that value, the lexicographically
    smallest is chosen.
    """
    k = alphas.shape[0]
    pats = _patterns(k)
    values = pats @ alphas
    order = np.argsort(values, kind="stable")
    values, pats = values[order], pats[order]
    first = np.r_[True, np.diff(values) != 0]
    values, pats = values[first], pats[first]
    if values.size == 1:
        idx = np.zeros(x.shape, dtype=np.intp)
    else:
        mids = 0.5 * (values[1:] + values[:-1])
        idx = np.searchsorted(mids, x, side="right")
    new = pats[idx].T.astype(np.int8)
    cur_value = current.T.astype(np.float64) @ alphas
    keep = cur_value == values[idx]
    new[:, keep] = current[:, keep]
    return new


def alternating_quantize(w, k, granularity="whole", rel_tol=ALT_REL_TOL, max_iter=ALT_MAX_ITER):
    """Alternate nearest-codebook assignment and least-squares coefficients.

    Starts from the refined greedy solution. Each group stops when its bit
    assignment no longer changes, when the relative error improvement drops
    below ``rel_tol``, or after ``max_iter`` rounds. ``mse_history`` records
    the whole-array MSE after every round and is non-increasing.
    """
    w = as_array(w, "w")
    k = check_positive_int(k, "k")
    start = refine_alphas(greedy_quantize(w, k, granularity), w)
    g = _groups(w, granularity)
    alphas, planes = _unpack(start)
    alphas, planes = alphas.copy(), planes.copy()
    sse = _group_sse(g, alphas, planes)
    history = [float(sse.sum()) / w.size]
    degenerate = start.status != "ok"
    active = np.ones(g.shape[0], dtype=bool)

    iterations = 0
    while active.any() and iterations < max_iter:
        iterations += 1
        for j in np.flatnonzero(active):
            new_planes = _assign(g[j], alphas[:, j], planes[:, j])
            changed = not np.array_equal(new_planes, planes[:, j])
            new_alphas, degen = _solve_alphas(g[j : j + 1], alphas[:, j : j + 1], new_planes[:, None])
            new_sse = _group_sse(g[j : j + 1], new_alphas, new_planes[:, None])[0]
            if new_sse > sse[j]:
                active[j] = False
                continue
            degenerate |= degen
            improvement = sse[j] - new_sse
            planes[:, j], alphas[:, j], previous, sse[j] = new_planes, new_alphas[:, 0], sse[j], new_sse
            if not changed or improvement <= rel_tol * previous:
                active[j] = False
        history.append(float(sse.sum()) / w.size)

    return _form(
        alphas,
        planes,
        w.shape,
        granularity,
        status="degenerate-planes" if degenerate else "ok",
        iterations=iterations,
        mse_history=history,
    )


def _peel_alphas(values, k, tol):
    """Coefficients whose codebook contains every value in ``values``, or None.

    Shifted by the minimum and halved, a complete k-bit codebook is the set of
    subset sums of the alphas. The smallest positive gap is then the smallest
    alpha, and pairing each sum with its partial sum plus that alpha leaves
    the subset sums of the remaining alphas. Only complete codebooks (all
    ``2**k`` values distinct and present) are recognised.
    """
    if len(values) != 2**k:
        return None
    sums = list((values - values[0]) / 2.0)
    alphas = []
    while len(sums) > 1:
        a = sums[1] - sums[0]
        rest, kept = sums[:], []
        while rest:
            x = rest.pop(0)
            kept.append(x)
            j = int(np.argmin(np.abs(np.array(rest) - (x + a)))) if rest else -1
            if j < 0 or abs(rest[j] - (x + a)) > tol:
                return None
            rest.pop(j)
        alphas.append(a)
        sums = kept
    return np.array(alphas[::-1])


def _in_codebook_form(w, k, granularity):
    """True when every group of ``w`` already lies exactly on some k-bit codebook."""
    for g in _groups(w, granularity):
        values = np.unique(g)
        scale = max(float(np.abs(values).max()), np.finfo(np.float64).tiny)
        alphas = _peel_alphas(values, k, 1e-9 * scale)
        if alphas is None:
            return False
        book = _patterns(k) @ alphas
        if np.abs(values[:, None] - book[None, :]).min(axis=1).max() > 1e-12 * scale:
            return False
    return True


def quantize_distort(w, k, method="greedy", granularity="whole"):
    """Quantize ``w`` to ``k`` bits and return the dequantized full-precision array.

    An input that already sits on a complete k-bit codebook is returned
    unchanged, so repeated distortion is a no-op. Greedy fitting on its own
    would drift: the first coefficient of a quantized array is generally not
    the coefficient that produced it.
    """
    if method not in METHODS:
        raise DomainError(f"method must be one of {METHODS}, got {method!r}")
    k = check_positive_int(k, "k")
    arr = as_array(w, "w")
    if arr.size and _in_codebook_form(arr, k, granularity):
        return arr.copy()
    if method == "greedy":
        q = greedy_quantize(arr, k, granularity)
    else:
        q = alternating_quantize(arr, k, granularity)
    return q.reconstruct()
