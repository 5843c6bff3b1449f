"""Metric upgrade of a projective triplet via the absolute dual quadric.

The twelve scale constraints linking the dual image of the absolute conic to
the second and third cameras are collected into C(lambda, mu) x = 0.  Six
paired 10x10 subdeterminants give polynomials in (lambda, mu) over a fixed
18-monomial basis; a staged Gauss-Jordan elimination with row shifts
interreduces them until the two scales can be read off the last rows.  Back
substitution returns the dual quadric, whose Cholesky factor is the
calibration matrix.

Numerical practice baked in here (validated on synthetic ground truth):
the two scale variables are rebalanced per instance before any coefficient
fitting, every extracted root is polished on the polynomial system, and the
final root is refined against the subdeterminants of C itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BasisOverflow,
    ImproperRotation,
    NormalizationFailure,
    NotPositiveDefinite,
    PivotPatternBroken,
    RankUnexpected,
    SolverError,
    StructuralViolation,
)
from .geometry import Camera, ProjectiveTriplet, SixViewCorrespondences
from .numerics import (
    DegenerateMatrix,
    cholesky_upper_right,
    gj_rref,
    nearest_rotation,
)
from .reconstruction import projective_reconstruction

# ---------------------------------------------------------------------------
# monomial bookkeeping
# ---------------------------------------------------------------------------

#: exponent pairs (a, b) for lambda^a mu^b, in the fixed elimination order
MONOMIAL18 = (
    (4, 1), (3, 2), (2, 3), (1, 4), (4, 0), (0, 4), (3, 1), (2, 2), (1, 3),
    (3, 0), (2, 1), (1, 2), (0, 3), (2, 0), (1, 1), (0, 2), (1, 0), (0, 1),
)
#: extraction basis extended by the structurally absent monomials
MONOMIAL21 = MONOMIAL18 + ((5, 0), (0, 5), (0, 0))

_EXP_A = np.array([m[0] for m in MONOMIAL18], dtype=float)
_EXP_B = np.array([m[1] for m in MONOMIAL18], dtype=float)
_EXP21_A = np.array([m[0] for m in MONOMIAL21], dtype=float)
_EXP21_B = np.array([m[1] for m in MONOMIAL21], dtype=float)

#: index maps for multiplication by lambda / mu inside the 18-monomial basis
SHIFT_LAMBDA = {5: 3, 6: 0, 7: 1, 8: 2, 9: 4, 10: 6, 11: 7, 12: 8,
                13: 9, 14: 10, 15: 11, 16: 13, 17: 14}
SHIFT_MU = {4: 0, 6: 1, 7: 2, 8: 3, 9: 6, 10: 7, 11: 8, 12: 5,
            13: 10, 14: 11, 15: 12, 16: 14, 17: 15}
FORBIDDEN_LAMBDA = (0, 1, 2, 3, 4)
FORBIDDEN_MU = (0, 1, 2, 3, 5)

_SHIFT_L_SRC = np.array(sorted(SHIFT_LAMBDA), dtype=int)
_SHIFT_L_DST = np.array([SHIFT_LAMBDA[k] for k in sorted(SHIFT_LAMBDA)], dtype=int)
_SHIFT_M_SRC = np.array(sorted(SHIFT_MU), dtype=int)
_SHIFT_M_DST = np.array([SHIFT_MU[k] for k in sorted(SHIFT_MU)], dtype=int)
_FORB_L = np.array(FORBIDDEN_LAMBDA, dtype=int)
_FORB_M = np.array(FORBIDDEN_MU, dtype=int)

# named basis columns used by the extraction stages (0-based)
_COL_L4, _COL_M4 = 4, 5
_COL_L3M, _COL_L2M2 = 6, 7
_COL_L3, _COL_L2M, _COL_LM2 = 9, 10, 11
_COL_L2, _COL_LM, _COL_M2, _COL_L, _COL_M = 13, 14, 15, 16, 17

# symmetric basis of the dual quadric as a function of the unknown vector
# x = (r, q1, q2, q3, w11, w12, w13, w22, w23, w33)
_X_BASIS = np.zeros((10, 4, 4))
for _k, _spots in enumerate((
        ((3, 3),), ((0, 3), (3, 0)), ((1, 3), (3, 1)), ((2, 3), (3, 2)),
        ((0, 0),), ((0, 1), (1, 0)), ((0, 2), (2, 0)), ((1, 1),),
        ((1, 2), (2, 1)), ((2, 2),))):
    for _i, _j in _spots:
        _X_BASIS[_k, _i, _j] = 1.0

_ENTRY_ORDER = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))

_SUBDET_ROWS = [np.array([r for r in range(12) if r not in (i, i + 6)])
                for i in range(6)]

# fixed sample points for determinant interpolation: three circles, offsets
# chosen to keep the Vandermonde well conditioned
def _sample_table(radii, counts, offsets):
    pts = np.concatenate([
        np.column_stack([r * np.cos(a), r * np.sin(a)])
        for r, n, off in zip(radii, counts, offsets)
        for a in [np.linspace(0.0, 2.0 * np.pi, n, endpoint=False) + off]])
    vander = np.column_stack([
        pts[:, 0] ** a * pts[:, 1] ** b for a, b in MONOMIAL21])
    return pts, np.linalg.pinv(vander)


# fine table for production coefficients, coarse for scale probing
_SAMPLES, _PINV21 = _sample_table((0.6, 1.0, 1.55), (10, 10, 10), (0.0, 0.3, 0.6))
_SAMPLES_COARSE, _PINV21_COARSE = _sample_table(
    (0.55, 1.0, 1.7), (8, 8, 8), (0.0, 0.35, 0.7))


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstraintMatrix:
    """Scalar part D of the pencil C(lambda, mu) = blocks(lambda, mu) - D."""

    D: np.ndarray

    def c_of(self, lam, mu):
        """Numeric C(lambda, mu), 12x10."""
        c = -self.D.copy()
        for j in range(6):
            c[j, 4 + j] += lam
            c[6 + j, 4 + j] += mu
        return c

    def subdet_values(self, lam, mu):
        """Direct determinants of the six equilibrated 10x10 submatrices."""
        return self.subdet_values_multi(np.array([[lam, mu]]))[0]

    def subdet_values_multi(self, lam_mu):
        """subdet_values stacked over an (n, 2) array of (lambda, mu) pairs."""
        lam_mu = np.asarray(lam_mu, dtype=float)
        n = lam_mu.shape[0]
        blocks = np.empty((n, 6, 10, 10))
        for k in range(n):
            c = self.c_of(lam_mu[k, 0], lam_mu[k, 1])
            for i in range(6):
                blocks[k, i] = c[_SUBDET_ROWS[i]]
        flat = blocks.reshape(n * 6, 10, 10)
        scale = np.maximum(np.max(np.abs(flat), axis=2), 1e-300)
        return np.linalg.det(flat / scale[:, :, None]).reshape(n, 6)


@dataclass(frozen=True)
class DualQuadricSolution:
    """Absolute dual quadric in the projective frame, normalized w33 = 1."""

    lam: float
    mu: float
    r: float
    q: np.ndarray
    diac: np.ndarray

    @property
    def q_inf(self):
        out = np.zeros((4, 4))
        out[:3, :3] = self.diac
        out[:3, 3] = self.q
        out[3, :3] = self.q
        out[3, 3] = self.r
        return out


@dataclass(frozen=True)
class CalibrationResult:
    """Calibration matrix and metric cameras, global scale free."""

    K: np.ndarray
    R2: np.ndarray
    R3: np.ndarray
    t2: np.ndarray
    t3: np.ndarray
    p: np.ndarray
    H: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def metric_cameras(self):
        k = self.K
        p1 = Camera(k @ np.hstack([np.eye(3), np.zeros((3, 1))]))
        p2 = Camera(k @ np.hstack([self.R2, self.t2[:, None]]))
        p3 = Camera(k @ np.hstack([self.R3, self.t3[:, None]]))
        return (p1, p2, p3)


# ---------------------------------------------------------------------------
# constraint assembly
# ---------------------------------------------------------------------------

def build_constraints(triplet: ProjectiveTriplet) -> ConstraintMatrix:
    """Rows of D: entries of P' Q* P'^T as linear forms in the unknowns.

    Row k holds the (1,1),(1,2),(1,3),(2,2),(2,3),(3,3) entry order for the
    second camera, rows 7-12 the same entries for the third camera.
    """
    d = np.zeros((12, 10))
    for base, cam in ((0, triplet.p2), (6, triplet.p3)):
        pe = np.einsum('rs,kst,qt->krq', cam.P, _X_BASIS, cam.P)
        for e, (i, j) in enumerate(_ENTRY_ORDER):
            d[base + e] = pe[:, i, j]
    return ConstraintMatrix(d)


def shift_row(row, var, tol=1e-9):
    """Coefficients of row multiplied by lambda or mu, within the basis."""
    row = np.asarray(row, dtype=float)
    if row.shape != (18,):
        raise ValueError("shift_row expects an 18-coefficient row")
    if var == "lambda":
        src, dst, forbidden = _SHIFT_L_SRC, _SHIFT_L_DST, _FORB_L
    elif var == "mu":
        src, dst, forbidden = _SHIFT_M_SRC, _SHIFT_M_DST, _FORB_M
    else:
        raise ValueError("var must be 'lambda' or 'mu'")
    scale = float(np.max(np.abs(row)))
    if scale > 0 and np.max(np.abs(row[forbidden])) > tol * scale:
        raise BasisOverflow("shift would leave the monomial basis")
    out = np.zeros(18)
    out[dst] = row[src]
    return out


# ---------------------------------------------------------------------------
# subdeterminant polynomials
# ---------------------------------------------------------------------------

def _subdet_rows21(d_matrix, alpha, beta, row_weights=None, coarse=False):
    """Coefficients of all six S_i over MONOMIAL21 in scaled variables.

    Columns 1-4 and 4+i of each 10x10 submatrix are scalar; a partial
    Gauss-Jordan elimination reduces each determinant to a 5x5 block affine
    in (lambda, mu), which is evaluated on the fixed sample set (scaled by
    alpha, beta) and fitted.  The six eliminations run batched.  Optional
    positive ``row_weights`` rescale the twelve constraint equations; the
    zero set of every subdeterminant is unaffected.
    """
    stacks = np.empty((6, 10, 30))
    for i in range(6):
        rows = _SUBDET_ROWS[i]
        stacks[i, :, :10] = -d_matrix[rows]
        stacks[i, :, 10:] = 0.0
        for rr, r in enumerate(rows):
            if r < 6:
                stacks[i, rr, 10 + 4 + r] = 1.0
            else:
                stacks[i, rr, 20 + 4 + (r - 6)] = 1.0
        if row_weights is not None:
            stacks[i] *= np.asarray(row_weights, dtype=float)[rows, None]
    scale = float(np.max(np.abs(d_matrix)))
    used = np.zeros((6, 10), dtype=bool)
    idx6 = np.arange(6)
    for step in range(5):
        cols = np.array([(0, 1, 2, 3, 4 + i)[step] for i in range(6)])
        entries = np.abs(stacks[idx6, :, cols])  # (6, 10)
        entries[used] = -1.0
        kbest = np.argmax(entries, axis=1)
        pivots = stacks[idx6, kbest, cols]
        if np.any(np.abs(pivots) <= 1e-13 * scale):
            raise StructuralViolation("scalar column block is rank deficient")
        pivot_rows = stacks[idx6, kbest] / pivots[:, None]  # (6, 30)
        factors = stacks[idx6, :, cols].copy()  # (6, 10)
        factors[idx6, kbest] = 0.0
        stacks -= factors[:, :, None] * pivot_rows[:, None, :]
        stacks[idx6, kbest] = pivot_rows
        used[idx6, kbest] = True
    samples, pinv = (_SAMPLES_COARSE, _PINV21_COARSE) if coarse \
        else (_SAMPLES, _PINV21)
    out = np.empty((6, 21))
    pts_l = samples[:, 0] * alpha
    pts_m = samples[:, 1] * beta
    n_s = len(samples)
    blocks = np.empty((6, n_s, 5, 5))
    for i in range(6):
        free_rows = np.where(~used[i])[0]
        func_cols = np.array([4 + j for j in range(6) if j != i])
        c1 = stacks[i][np.ix_(free_rows, func_cols)]
        c2 = stacks[i][np.ix_(free_rows, func_cols + 10)]
        c3 = stacks[i][np.ix_(free_rows, func_cols + 20)]
        blocks[i] = c1[None] + pts_l[:, None, None] * c2[None] \
            + pts_m[:, None, None] * c3[None]
    dets = np.linalg.det(blocks.reshape(6 * n_s, 5, 5)).reshape(6, n_s)
    for i in range(6):
        out[i] = pinv @ dets[i]
    return out


def _fit_variable_scales(rows21):
    """Multiplicative rebalancing (d_alpha, d_beta) from coefficient decay.

    Log-linear least squares of log|c| against the monomial exponents, one
    free offset per row; the slopes estimate the magnitudes of the two scale
    variables.
    """
    rows21 = np.asarray(rows21, dtype=float)
    nrows, ncols = rows21.shape
    absrows = np.abs(rows21)
    mx = np.max(absrows, axis=1, keepdims=True)
    const_mask = (_EXP21_A[:ncols] == 0) & (_EXP21_B[:ncols] == 0)
    keep = (absrows >= 1e-11 * np.maximum(mx, 1e-300)) & (mx > 0) & ~const_mask[None, :]
    ridx, cidx = np.where(keep)
    if ridx.size == 0:
        return 1.0, 1.0
    design = np.zeros((ridx.size, nrows + 2))
    design[np.arange(ridx.size), ridx] = 1.0
    design[:, nrows] = -_EXP21_A[cidx]
    design[:, nrows + 1] = -_EXP21_B[cidx]
    rhs = np.log(absrows[ridx, cidx])
    sol, *_ = np.linalg.lstsq(design, rhs, rcond=None)
    da = float(np.exp(np.clip(sol[nrows], -25.0, 25.0)))
    db = float(np.exp(np.clip(sol[nrows + 1], -25.0, 25.0)))
    return da, db


def _scaled_rows(cmat: ConstraintMatrix, scale_hint=None, row_weights=None):
    """All six S_i over MONOMIAL21 in rebalanced variables.

    Returns (rows, alpha, beta) with rows normalized to unit max-abs.
    Iterates the balance fit until both correction factors are moderate; a
    scale hint from a previous root of the same scene usually makes the
    first extraction final.
    """
    alpha, beta = scale_hint if scale_hint is not None else (1.0, 1.0)
    for _ in range(5):
        probe = _subdet_rows21(cmat.D, alpha, beta, row_weights, coarse=True)
        probe = probe / np.max(np.abs(probe), axis=1, keepdims=True)
        da, db = _fit_variable_scales(probe)
        if 0.1 < da < 10.0 and 0.1 < db < 10.0:
            break
        alpha *= da
        beta *= db
    rows = _subdet_rows21(cmat.D, alpha, beta, row_weights)
    rows = rows / np.max(np.abs(rows), axis=1, keepdims=True)
    return rows, alpha, beta


def _check_structural_zeros(row21, tol=1e-8):
    junk = np.max(np.abs(row21[18:]))
    if junk > tol * np.max(np.abs(row21)):
        raise StructuralViolation(
            "lambda^5 / mu^5 / constant coefficients exceed tolerance")


def subdeterminant_poly(cmat: ConstraintMatrix, i):
    """S_i as 18 coefficients over MONOMIAL18 in the true variables.

    The overall scale is arbitrary; the returned row is normalized to unit
    max-abs.  Raises StructuralViolation when the structurally absent
    monomials carry weight, which signals a bad triplet.
    """
    if not 0 <= i <= 5:
        raise ValueError("subdeterminant index must be in 0..5")
    rows, alpha, beta = _scaled_rows(cmat)
    row = rows[i]
    _check_structural_zeros(row)
    # exact change of variables back to (lambda, mu)
    powers = alpha ** (-_EXP21_A[:18]) * beta ** (-_EXP21_B[:18])
    out = row[:18] * powers
    return out / np.max(np.abs(out))


# ---------------------------------------------------------------------------
# elimination schedule
# ---------------------------------------------------------------------------

def _row_with_pivot(res, col):
    if col in res.pivot_cols:
        return res.reduced[res.pivot_cols.index(col)]
    return None


def _shiftable(row, forbidden, tol=1e-9):
    return np.max(np.abs(row[np.asarray(forbidden, dtype=int)])) <= tol * np.max(np.abs(row))


def _schedule(f0):
    """Run the staged elimination; return (seeds, final RrefResult).

    Rows to multiply are selected by their pivot monomial, which coincides
    with the nominal row numbers whenever the pivots land on the leading
    columns.  Seeds come from the closing read-off rows and, as a fallback,
    from the 2x2 multiplication (action) matrix on the standard monomials.
    """
    r0 = gj_rref(f0)
    row_m4 = _row_with_pivot(r0, _COL_M4)
    row_l4 = _row_with_pivot(r0, _COL_L4)
    if row_m4 is None or row_l4 is None or not (
            _shiftable(row_m4, FORBIDDEN_LAMBDA) and _shiftable(row_l4, FORBIDDEN_MU)):
        raise PivotPatternBroken(f"stage F0 pivots {r0.pivot_cols}")
    f1 = np.vstack([r0.reduced,
                    shift_row(row_m4, "lambda"),
                    shift_row(row_l4, "mu")])
    r1 = gj_rref(f1)
    row_a = _row_with_pivot(r1, _COL_L3M)
    row_b = _row_with_pivot(r1, _COL_L2M2)
    if row_a is None or row_b is None or not all(
            _shiftable(r, f) for r in (row_a, row_b)
            for f in (FORBIDDEN_LAMBDA, FORBIDDEN_MU)):
        raise PivotPatternBroken(f"stage F1 pivots {r1.pivot_cols}")
    f2 = np.vstack([r1.reduced,
                    shift_row(row_a, "lambda"), shift_row(row_a, "mu"),
                    shift_row(row_b, "lambda"), shift_row(row_b, "mu")])
    r2 = gj_rref(f2)
    row_c = _row_with_pivot(r2, _COL_L2M)
    row_d = _row_with_pivot(r2, _COL_LM2)
    row_e = _row_with_pivot(r2, _COL_L3)
    if row_c is None or row_d is None or row_e is None or not (
            all(_shiftable(r, f) for r in (row_c, row_d)
                for f in (FORBIDDEN_LAMBDA, FORBIDDEN_MU))
            and _shiftable(row_e, FORBIDDEN_MU)):
        raise PivotPatternBroken(f"stage F2 pivots {r2.pivot_cols}")
    f3 = np.vstack([r2.reduced,
                    shift_row(row_c, "lambda"), shift_row(row_c, "mu"),
                    shift_row(row_d, "lambda"), shift_row(row_d, "mu"),
                    shift_row(row_e, "mu")])
    r3 = gj_rref(f3)

    seeds = []
    row_m2 = _row_with_pivot(r3, _COL_M2)
    row_l = _row_with_pivot(r3, _COL_L)
    if row_m2 is not None and row_l is not None:
        tail_m2 = [c for c in range(18)
                   if c != _COL_M2 and abs(row_m2[c]) > 1e-9]
        tail_l = [c for c in range(18)
                  if c != _COL_L and abs(row_l[c]) > 1e-9]
        if set(tail_m2) <= {_COL_M} and set(tail_l) <= {_COL_M}:
            mu0 = -row_m2[_COL_M]
            seeds.append((-mu0 * row_l[_COL_M], mu0))
    row_l2 = _row_with_pivot(r3, _COL_L2)
    row_lm = _row_with_pivot(r3, _COL_LM)
    if row_l2 is not None and row_lm is not None:
        clean = all(abs(r[c]) <= 1e-9
                    for r in (row_l2, row_lm)
                    for c in range(18)
                    if c not in (_COL_L, _COL_M, _COL_L2, _COL_LM))
        if clean:
            mul = -np.array([[row_l2[_COL_L], row_l2[_COL_M]],
                             [row_lm[_COL_L], row_lm[_COL_M]]])
            vals, vecs = np.linalg.eig(mul)
            for k in range(2):
                if abs(vals[k].imag) > 1e-6 * (abs(vals[k]) + 1e-300):
                    continue
                if abs(vecs[0, k]) < 1e-12:
                    continue
                lam_c = vals[k].real
                mu_c = float((vecs[1, k] / vecs[0, k]).real) * lam_c
                if 1e-4 < abs(lam_c) < 1e4 and 1e-4 < abs(mu_c) < 1e4:
                    seeds.append((lam_c, mu_c))
    if not seeds:
        raise PivotPatternBroken(f"stage F3 pivots {r3.pivot_cols}")
    return seeds, r3


def _residual_score(f0, lam, mu):
    mono = lam ** _EXP_A * mu ** _EXP_B
    den = np.abs(f0) @ np.abs(mono)
    num = np.abs(f0 @ mono)
    return float(np.max(num / np.maximum(den, 1e-300)))


def _polish_on_rows(f0, lam, mu, iters=8):
    """Gauss-Newton on the six polynomial rows; guards the origin root."""
    seed = (lam, mu)
    for _ in range(iters):
        mono = lam ** _EXP_A * mu ** _EXP_B
        f = f0 @ mono
        dl = _EXP_A * np.where(_EXP_A > 0, lam ** np.maximum(_EXP_A - 1, 0), 0.0) \
            * mu ** _EXP_B
        dm = _EXP_B * lam ** _EXP_A \
            * np.where(_EXP_B > 0, mu ** np.maximum(_EXP_B - 1, 0), 0.0)
        jac = np.column_stack([f0 @ dl, f0 @ dm])
        gram = jac.T @ jac
        try:
            step = np.linalg.solve(gram, -jac.T @ f)
        except np.linalg.LinAlgError:
            break
        nl, nm = lam + step[0], mu + step[1]
        if not (np.isfinite(nl) and np.isfinite(nm)):
            break
        done = (abs(nl - lam) < 1e-12 * abs(nl) + 1e-300
                and abs(nm - mu) < 1e-12 * abs(nm) + 1e-300)
        lam, mu = nl, nm
        if done:
            break
    if abs(lam) < 0.05 * abs(seed[0]) or abs(mu) < 0.05 * abs(seed[1]):
        return seed  # collapsed onto the excluded origin root
    return lam, mu


def _rescale_rows18(rows18, alpha, beta):
    """Exact substitution lambda -> alpha * lambda', mu -> beta * mu'."""
    powers = alpha ** _EXP_A * beta ** _EXP_B
    out = rows18 * powers[None, :]
    return out / np.max(np.abs(out), axis=1, keepdims=True)


def elimination_pipeline(f0_rows):
    """Extract (lambda, mu) from the six polynomial rows.

    Rows are rebalanced, pushed through the staged elimination, and the root
    is polished on the polynomial system.  Raises PivotPatternBroken when no
    stage variant yields a usable pivot structure.
    """
    rows = np.asarray(f0_rows, dtype=float)
    if rows.shape != (6, 18):
        raise ValueError("elimination_pipeline expects a 6x18 coefficient array")
    rows = rows / np.max(np.abs(rows), axis=1, keepdims=True)
    alpha, beta = 1.0, 1.0
    for _ in range(4):
        rebalanced = np.hstack([_rescale_rows18(rows, alpha, beta), np.zeros((6, 3))])
        da, db = _fit_variable_scales(rebalanced)
        if 0.1 < da < 10.0 and 0.1 < db < 10.0:
            break
        alpha *= da
        beta *= db

    best = None
    notes = []
    for factor in (1.0, 2.5, 0.4):
        a2, b2 = alpha * factor, beta * factor
        f0 = _rescale_rows18(rows, a2, b2)
        try:
            seeds, _ = _schedule(f0)
        except (PivotPatternBroken, BasisOverflow) as exc:
            notes.append(str(exc))
            continue
        lam0, mu0 = min(seeds, key=lambda s: _residual_score(f0, *s))
        lam, mu = _polish_on_rows(f0, lam0, mu0)
        score = _residual_score(f0, lam, mu)
        if best is None or score < best[0]:
            best = (score, lam * a2, mu * b2)
        if score < 1e-6:
            break
    if best is None:
        raise PivotPatternBroken("; ".join(notes))
    return best[1], best[2]


def _refine_on_subdets(cmat: ConstraintMatrix, lam, mu, iters=3):
    """Newton steps on the direct subdeterminants, anchored to C itself."""
    for _ in range(iters):
        hl = 3e-6 * max(abs(lam), 1e-30)
        hm = 3e-6 * max(abs(mu), 1e-30)
        vals = cmat.subdet_values_multi(np.array([
            [lam, mu], [lam + hl, mu], [lam - hl, mu],
            [lam, mu + hm], [lam, mu - hm]]))
        f = vals[0]
        jl = (vals[1] - vals[2]) / (2 * hl)
        jm = (vals[3] - vals[4]) / (2 * hm)
        jac = np.column_stack([jl, jm])
        gram = jac.T @ jac
        try:
            step = np.linalg.solve(gram, -jac.T @ f)
        except np.linalg.LinAlgError:
            break
        nl, nm = lam + step[0], mu + step[1]
        if not (np.isfinite(nl) and np.isfinite(nm)):
            break
        if abs(nl - lam) > 0.5 * abs(lam) or abs(nm - mu) > 0.5 * abs(mu):
            break
        done = (abs(nl - lam) < 1e-10 * abs(nl) + 1e-300
                and abs(nm - mu) < 1e-10 * abs(nm) + 1e-300)
        lam, mu = nl, nm
        if done:
            break
    return lam, mu


def extract_scales(cmat: ConstraintMatrix, scale_hint=None, row_weights=None):
    """(lambda, mu) for a constraint matrix: full extraction plus refinement.

    This is the path used by :func:`autocalibrate`; it differs from
    :func:`elimination_pipeline` only by the final Newton refinement against
    the subdeterminants of C, which is anchored to the input data rather than
    the fitted coefficients.
    """
    best = None
    notes = []
    rows, alpha, beta = _scaled_rows(cmat, scale_hint, row_weights)
    for row in rows:
        _check_structural_zeros(row)
    for factor in (1.0, 2.5, 0.4):
        a2, b2 = alpha * factor, beta * factor
        if factor == 1.0:
            rows2 = rows
        else:
            try:
                rows2 = _subdet_rows21(cmat.D, a2, b2, row_weights)
            except StructuralViolation as exc:
                notes.append(str(exc))
                continue
            rows2 = rows2 / np.max(np.abs(rows2), axis=1, keepdims=True)
        f0 = rows2[:, :18] / np.max(np.abs(rows2[:, :18]), axis=1, keepdims=True)
        try:
            seeds, _ = _schedule(f0)
        except (PivotPatternBroken, BasisOverflow) as exc:
            notes.append(str(exc))
            continue
        lam0, mu0 = min(seeds, key=lambda s: _residual_score(f0, *s))
        lam, mu = _polish_on_rows(f0, lam0, mu0)
        score = _residual_score(f0, lam, mu)
        if best is None or score < best[0]:
            best = (score, lam * a2, mu * b2)
        break
    if best is None:
        raise PivotPatternBroken("; ".join(notes))
    return _refine_on_subdets(cmat, best[1], best[2])


# ---------------------------------------------------------------------------
# back substitution and metric upgrade
# ---------------------------------------------------------------------------

def recover_dual_quadric(cmat: ConstraintMatrix, lam, mu,
                         rank_tol=1e-10, residual_band=0.5) -> DualQuadricSolution:
    """Dual quadric from the Gauss-Jordan reduction of C(lambda, mu).

    The equilibrated matrix is expected to have rank nine with pivots on the
    first nine columns, leaving the normalization column free.  Noisy
    instances reaching full rank fall back to a nine-column solve, guarded by
    a relative residual band.
    """
    if not np.isfinite(lam) or not np.isfinite(mu) or mu == 0.0:
        raise RankUnexpected("scales must be finite with mu nonzero")
    c = cmat.c_of(lam, mu)
    row_scale = 1.0 / np.maximum(np.max(np.abs(c), axis=1), 1e-300)
    ceq = c * row_scale[:, None]
    col_scale = np.maximum(np.max(np.abs(ceq), axis=0), 1e-300)
    ceq = ceq / col_scale[None, :]

    res = gj_rref(ceq, tol=rank_tol)
    if res.pivot_cols == tuple(range(9)):
        x_scaled = np.concatenate([-res.reduced[:9, 9], [1.0]])
    elif res.pivot_cols == tuple(range(10)):
        sub = gj_rref(ceq[:, :9], tol=rank_tol)
        if sub.rank < 9:
            raise RankUnexpected(f"rank {sub.rank} after dropping the free column")
        x9, *_ = np.linalg.lstsq(ceq[:, :9], -ceq[:, 9], rcond=None)
        x_scaled = np.concatenate([x9, [1.0]])
    elif res.rank != 9:
        raise RankUnexpected(f"rank {res.rank}, expected 9")
    else:
        raise NormalizationFailure(
            f"pivot columns {res.pivot_cols} leave the wrong column free")
    resid = np.linalg.norm(ceq @ x_scaled) / np.linalg.norm(x_scaled)
    if resid > residual_band:
        raise RankUnexpected(f"residual {resid:.3e} outside the tolerance band")
    x = x_scaled / col_scale
    if x[9] == 0.0 or not np.all(np.isfinite(x)):
        raise NormalizationFailure("normalization component vanished")
    x = x / x[9]
    diac = np.array([[x[4], x[5], x[6]],
                     [x[5], x[7], x[8]],
                     [x[6], x[8], 1.0]])
    return DualQuadricSolution(float(lam), float(mu), float(x[0]),
                               x[1:4].copy(), diac)


def calibrate_and_upgrade(triplet: ProjectiveTriplet,
                          sol: DualQuadricSolution) -> CalibrationResult:
    """Calibration matrix and metric cameras from a dual-quadric solution.

    Rejects candidates whose conic is not positive definite.  The world is
    oriented so the majority of the six points have positive depth; the flip,
    when applied, negates both translations and is recorded in diagnostics.
    """
    k = cholesky_upper_right(sol.diac)
    p_vec = -np.linalg.solve(sol.diac, sol.q)
    h = np.eye(4)
    h[:3, :3] = k
    h[3, :3] = -p_vec @ k

    rotations, translations = [], []
    for cam in (triplet.p2, triplet.p3):
        m = np.linalg.solve(k, cam.P @ h)
        det = np.linalg.det(m[:, :3])
        if det < 0:
            m = -m
            det = -det
        if det <= 1e-300:
            raise ImproperRotation("vanishing rotation determinant")
        m = m / det ** (1.0 / 3.0)
        try:
            rotations.append(nearest_rotation(m[:, :3]))
        except DegenerateMatrix as exc:
            raise ImproperRotation(str(exc)) from exc
        translations.append(m[:, 3].copy())

    # orient the frame by the chirality of the reconstructed points
    metric_pts = np.linalg.solve(h, triplet.world_points.T).T
    flipped = False
    cams_m = [k @ np.hstack([np.eye(3), np.zeros((3, 1))]),
              k @ np.hstack([rotations[0], translations[0][:, None]]),
              k @ np.hstack([rotations[1], translations[1][:, None]])]
    depth_signs = []
    for pm in cams_m:
        pr = metric_pts @ pm.T
        depth_signs.extend(np.sign(pr[:, 2] * metric_pts[:, 3]))
    if np.sum(depth_signs) < 0:
        flipped = True
        translations = [-t for t in translations]
        metric_pts = metric_pts * np.array([1.0, 1.0, 1.0, -1.0])

    result = CalibrationResult(
        K=k, R2=rotations[0], R3=rotations[1],
        t2=translations[0], t3=translations[1],
        p=p_vec, H=h,
        diagnostics={
            "lambda": sol.lam,
            "mu": sol.mu,
            "chirality_flipped": flipped,
            "projective_residual_px": triplet.residual_px,
        },
    )
    # metric reprojection residual against the triplet's own observations is
    # filled by autocalibrate, which knows the raw pixels
    return result


def _metric_rms(result: CalibrationResult, triplet: ProjectiveTriplet, obs_px):
    cams = result.metric_cameras()
    pts = np.linalg.solve(result.H, triplet.world_points.T).T
    if result.diagnostics.get("chirality_flipped"):
        pts = pts * np.array([1.0, 1.0, 1.0, -1.0])
    sq = []
    for i, cam in enumerate(cams):
        pr = pts @ cam.P.T
        w = pr[:, 2]
        if np.any(np.abs(w) <= 1e-12 * np.linalg.norm(pr, axis=1)):
            return float("inf")
        uv = pr[:, :2] / w[:, None]
        sq.append(np.sum((uv - obs_px[i]) ** 2, axis=1))
    return float(np.sqrt(np.mean(np.concatenate(sq))))


def autocalibrate(corr: SixViewCorrespondences, max_rms_px=None):
    """Full auto-calibration: every projective root through the metric upgrade.

    Returns the candidates that survive the positive-definiteness and
    rotation guards, ranked by metric reprojection residual; the list may be
    empty.  Component failures are recorded per root and never raised.
    """
    try:
        triplets = projective_reconstruction(corr, max_rms_px=max_rms_px)
    except SolverError:
        return []
    obs_px = corr.points[:, :, :2] / corr.points[:, :, 2:3]
    results = []
    scale_hint = None
    for index, triplet in enumerate(triplets):
        try:
            cmat = build_constraints(triplet)
            lam, mu = extract_scales(cmat, scale_hint)
            scale_hint = (abs(lam), abs(mu))
            sol = recover_dual_quadric(cmat, lam, mu)
            result = calibrate_and_upgrade(triplet, sol)
        except SolverError:
            continue
        result.diagnostics["root_index"] = index
        result.diagnostics["metric_residual_px"] = _metric_rms(result, triplet, obs_px)
        results.append(result)
    results.sort(key=lambda r: r.diagnostics["metric_residual_px"])
    return results
