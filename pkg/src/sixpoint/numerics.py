"""Dense linear-algebra and root-finding kernels with pinned pivoting and sign
conventions.

Everything here is deterministic: identical inputs produce bit-identical
outputs, which the test suite and the experiment harness rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMatrix, NotPositiveDefinite, ZeroPolynomial

DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class RrefResult:
    """Reduced row-echelon form together with its pivot bookkeeping."""

    reduced: np.ndarray
    pivot_cols: tuple
    rank: int


def gj_rref(m, tol=DEFAULT_TOL):
    """Gauss-Jordan elimination with partial pivoting (rows only).

    Scans columns left to right; the pivot is the maximum-absolute entry among
    the rows not yet used.  A column whose best entry is at most
    ``tol * max|m|`` is skipped and its unused-row entries are zeroed, which
    makes the reduction idempotent.  Columns are never swapped: downstream
    extraction reads fixed (row, column) positions.
    """
    a = np.array(m, dtype=float)
    if a.ndim != 2:
        raise ValueError("gj_rref expects a 2-d array")
    rows, cols = a.shape
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    thr = tol * (scale if scale > 0.0 else 1.0)
    pivot_cols = []
    pr = 0
    for c in range(cols):
        if pr >= rows:
            break
        sub = np.abs(a[pr:, c])
        k = int(np.argmax(sub))
        if sub[k] <= thr:
            a[pr:, c] = 0.0
            continue
        if k != 0:
            a[[pr, pr + k]] = a[[pr + k, pr]]
        a[pr] = a[pr] / a[pr, c]
        col = a[:, c].copy()
        col[pr] = 0.0
        a -= col[:, None] * a[pr]
        a[:, c] = 0.0
        a[pr, c] = 1.0
        pivot_cols.append(c)
        pr += 1
    return RrefResult(a, tuple(pivot_cols), len(pivot_cols))


def min_singular_vector(m):
    """Right singular vector of the smallest singular value, unit norm.

    The sign is fixed by making the largest-magnitude entry positive.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[1] < 2:
        raise ValueError("min_singular_vector expects a matrix with >= 2 columns")
    _, _, vt = np.linalg.svd(m)
    v = vt[-1]
    i = int(np.argmax(np.abs(v)))
    if v[i] < 0:
        v = -v
    return v


def cholesky_upper_right(s, tol=1e-8):
    """Upper-triangular K with K @ K.T proportional to s and K[2,2] = 1.

    Computed as the anti-diagonal flip of a standard lower Cholesky factor of
    the flipped matrix, then rescaled so the bottom-right entry is one.
    """
    s = np.asarray(s, dtype=float)
    if s.shape != (3, 3):
        raise ValueError("cholesky_upper_right expects a 3x3 matrix")
    scale = float(np.max(np.abs(s)))
    if scale == 0.0 or np.max(np.abs(s - s.T)) > tol * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    sym = 0.5 * (s + s.T)
    flip = np.fliplr(np.eye(3))
    try:
        lower = np.linalg.cholesky(flip @ sym @ flip)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix is not positive definite") from exc
    k = flip @ lower @ flip
    return k / k[2, 2]


def nearest_rotation(m, tol=1e-9):
    """Closest rotation to m in Frobenius norm, via SVD.

    When det(U V^T) < 0 the column of U paired with the smallest singular
    value is negated so the result is a proper rotation.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError("nearest_rotation expects a 3x3 matrix")
    u, sv, vt = np.linalg.svd(m)
    if sv[-1] <= tol * sv[0]:
        raise DegenerateMatrix("smallest singular value too small for a rotation")
    r = u @ vt
    if np.linalg.det(r) < 0:
        u = u.copy()
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


def cubic_real_roots(c3, c2, c1, c0, tol=DEFAULT_TOL):
    """Real roots (with multiplicity, ascending) of c3 x^3 + c2 x^2 + c1 x + c0.

    Degenerate leading coefficients fall back to the quadratic and linear
    cases.  Every root is polished by one Newton step on the full cubic.
    """
    coeffs = np.array([c3, c2, c1, c0], dtype=float)
    scale = float(np.max(np.abs(coeffs)))
    if scale <= 0.0:
        raise ZeroPolynomial("all cubic coefficients vanish")
    thr = tol * scale

    def newton(x):
        p = ((c3 * x + c2) * x + c1) * x + c0
        dp = (3.0 * c3 * x + 2.0 * c2) * x + c1
        return x - p / dp if dp != 0.0 else x

    if abs(c3) <= thr:
        if abs(c2) <= thr:
            if abs(c1) <= thr:
                return np.array([])
            return np.array([newton(-c0 / c1)])
        disc = c1 * c1 - 4.0 * c2 * c0
        if disc < 0.0:
            return np.array([])
        sq = np.sqrt(disc)
        roots = [(-c1 - sq) / (2.0 * c2), (-c1 + sq) / (2.0 * c2)]
        return np.sort([newton(x) for x in roots])

    raw = np.roots(coeffs)
    out = []
    for z in raw:
        if abs(z.imag) <= 1e-7 * (1.0 + abs(z)):
            out.append(newton(z.real))
    return np.sort(np.array(out))
