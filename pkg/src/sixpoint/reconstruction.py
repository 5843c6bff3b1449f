"""Minimal three-view six-point projective reconstruction.

Per view, the first five points are pinned to the canonical projective basis,
which leaves a one-parameter camera family; eliminating the family against
the sixth image point yields one quadric constraint on the sixth world point
per view.  Intersecting the three quadrics reduces to a cubic, giving one or
three real candidates, after which all cameras follow by linear resection.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    BasisPointCoincidence,
    DegenerateView,
    EmptySolutionSet,
    NoRealCandidate,
    RankDefect,
    SolverError,
)
from .geometry import (
    BASIS5,
    Camera,
    ProjectiveTriplet,
    SixViewCorrespondences,
    apply_h0,
    canonical_plane_basis,
    reprojection_rms,
)
from .numerics import cubic_real_roots, min_singular_vector

#: monomial order of the quadric coefficients
QUAD_MONOMIALS = ("XY", "XZ", "XW", "YZ", "YW", "ZW")

# index of the coefficient paired with coordinates (i, j), i < j
_PAIR_INDEX = {(0, 1): 0, (0, 2): 1, (0, 3): 2, (1, 2): 3, (1, 3): 4, (2, 3): 5}

_BASIS_UNITS = BASIS5 / np.linalg.norm(BASIS5, axis=1, keepdims=True)


@dataclass(frozen=True)
class ViewQuadric:
    """Quadric with cross terms only, vanishing on the five basis points."""

    coeffs: np.ndarray

    def monomials(self, x):
        x = np.asarray(x, dtype=float)
        return np.array([x[0] * x[1], x[0] * x[2], x[0] * x[3],
                         x[1] * x[2], x[1] * x[3], x[2] * x[3]])

    def evaluate(self, x):
        return float(self.coeffs @ self.monomials(x))

    def gradient(self, x):
        x0, y, z, w = np.asarray(x, dtype=float)
        dm = np.array([
            [y, x0, 0.0, 0.0],
            [z, 0.0, x0, 0.0],
            [w, 0.0, 0.0, x0],
            [0.0, z, y, 0.0],
            [0.0, w, 0.0, y],
            [0.0, 0.0, w, z],
        ])
        return self.coeffs @ dm


def view_quadric(points, tol=1e-10) -> ViewQuadric:
    """Quadric constraint on the sixth world point implied by one view.

    ``points`` holds the six homogeneous image points of the view.  With the
    first four mapped to the canonical image basis and the transformed fifth
    and sixth points (u, v, w) and (p, q, r), the constraint is the 2x2
    elimination determinant of the sixth point's incidence equations against
    the one-parameter camera family.  Coefficients are normalized to unit
    norm with a fixed sign.
    """
    pts = np.asarray(points, dtype=float)
    t = canonical_plane_basis(pts[0], pts[1], pts[2], pts[3])
    x5 = t @ pts[4]
    x6 = t @ pts[5]
    if np.min(np.abs(x5)) <= tol * np.linalg.norm(x5):
        raise DegenerateView("transformed fifth point has a zero coordinate")
    if np.min(np.abs(x6)) <= tol * np.linalg.norm(x6):
        raise DegenerateView("transformed sixth point has a zero coordinate")
    u, v, w = x5
    p, q, r = x6
    c = np.array([
        q * r * (v - u),
        q * q * (u - w),
        q * u * (r - q),
        p * q * (w - v),
        q * v * (p - r),
        q * w * (q - p),
    ])
    n = np.linalg.norm(c)
    if n <= 0.0:
        raise DegenerateView("quadric coefficients vanish")
    c = c / n
    i = int(np.argmax(np.abs(c)))
    if c[i] < 0:
        c = -c
    return ViewQuadric(c)


def _recover_point(m, tol=1e-13):
    """World point X from its cross-monomial vector m, or None if degenerate.

    Anchors the coordinate whose squared value has the best-conditioned
    product ratio; the remaining coordinates follow by division, which keeps
    their relative signs consistent.  m is defined up to sign, and only one
    sign yields a nonnegative squared ratio.
    """
    m = np.asarray(m, dtype=float)
    best = None
    for anchor in range(4):
        others = [k for k in range(4) if k != anchor]
        for i in range(3):
            for j in range(i + 1, 3):
                a, b = others[i], others[j]
                e1 = m[_PAIR_INDEX[(min(anchor, a), max(anchor, a))]]
                e2 = m[_PAIR_INDEX[(min(anchor, b), max(anchor, b))]]
                e3 = m[_PAIR_INDEX[(a, b)]]
                score = min(abs(e1), abs(e2), abs(e3))
                if best is None or score > best[0]:
                    best = (score, anchor, a, b)
    score, anchor, a, b = best
    if score <= tol:
        return None
    e1 = m[_PAIR_INDEX[(min(anchor, a), max(anchor, a))]]
    e2 = m[_PAIR_INDEX[(min(anchor, b), max(anchor, b))]]
    e3 = m[_PAIR_INDEX[(a, b)]]
    ratio = e1 * e2 / e3
    if ratio < 0:
        m = -m
        ratio = -ratio
    if ratio == 0:
        return None
    x = np.zeros(4)
    x[anchor] = np.sqrt(ratio)
    for k in range(4):
        if k != anchor:
            x[k] = m[_PAIR_INDEX[(min(anchor, k), max(anchor, k))]] / x[anchor]
    n = np.linalg.norm(x)
    if not np.isfinite(n) or n == 0:
        return None
    x = x / n
    i = int(np.argmax(np.abs(x)))
    if x[i] < 0:
        x = -x
    return x


def _refine_on_quadrics(quadrics, x, iters=3):
    """Newton steps driving the three quadric residuals to machine precision.

    The update is restricted to the tangent space of the unit sphere, which
    fixes the projective gauge.
    """
    x = np.asarray(x, dtype=float)
    x = x / np.linalg.norm(x)
    for _ in range(iters):
        f = np.array([q.evaluate(x) for q in quadrics])
        jac = np.vstack([q.gradient(x) for q in quadrics])
        proj = np.eye(4) - np.outer(x, x)
        jp = jac @ proj
        gram = jp.T @ jp + 1e-300 * np.eye(4)
        try:
            step = np.linalg.solve(gram, -jp.T @ f)
        except np.linalg.LinAlgError:
            break
        xn = x + proj @ step
        n = np.linalg.norm(xn)
        if not np.isfinite(n) or n == 0:
            break
        x = xn / n
    i = int(np.argmax(np.abs(x)))
    if x[i] < 0:
        x = -x
    return x


def _is_basis_point(x, tol=1e-8):
    # sine of the angle to each basis point; well conditioned for tiny angles
    dots = _BASIS_UNITS @ x
    residuals = x[None, :] - dots[:, None] * _BASIS_UNITS
    return bool(np.any(np.linalg.norm(residuals, axis=1) < tol))


def pencil_cubic(q1, q2, q3, tol=1e-8):
    """Pencil construction shared by the solver and its diagnostics.

    Returns (cubic coefficients (g3, g2, g1, g0), s0, d1, d2, b1, b2, nullb):
    the cubic in the pencil parameter t with direction d = d1 + t d2, the
    anchor coordinates of the basis point, the two conic forms on the
    nullspace, and the nullspace basis itself.
    """
    stack = np.vstack([q.coeffs for q in (q1, q2, q3)])
    _, sv, vt = np.linalg.svd(stack)
    if sv[2] <= tol * sv[0]:
        raise RankDefect("quadric stack has rank below three")
    nullb = vt[3:].T  # 6x3, orthonormal

    m0 = np.ones(6) / np.sqrt(6.0)
    s0 = nullb.T @ m0
    if np.linalg.norm(nullb @ s0 - m0) > 1e-6:
        raise RankDefect("basis monomial vector is outside the nullspace")
    s0 = s0 / np.linalg.norm(s0)

    # consistency conics  m_XY m_ZW = m_XZ m_YW = m_XW m_YZ  restricted to
    # nullspace coordinates
    a1 = np.zeros((6, 6))
    a1[0, 5] = a1[5, 0] = 0.5
    a1[1, 4] = a1[4, 1] = -0.5
    a2 = np.zeros((6, 6))
    a2[1, 4] = a2[4, 1] = 0.5
    a2[2, 3] = a2[3, 2] = -0.5
    b1 = nullb.T @ a1 @ nullb
    b2 = nullb.T @ a2 @ nullb

    # complete s0 to an orthonormal basis via a Householder reflection
    e0 = np.array([1.0, 0.0, 0.0])
    vh = s0 - e0
    nv = np.linalg.norm(vh)
    house = np.eye(3) if nv < 1e-12 else np.eye(3) - 2.0 * np.outer(vh / nv, vh / nv)
    d1, d2 = house[:, 1], house[:, 2]

    b11, b12 = float(s0 @ b1 @ d1), float(s0 @ b1 @ d2)
    b21, b22 = float(s0 @ b2 @ d1), float(s0 @ b2 @ d2)
    q111, q112, q122 = float(d1 @ b1 @ d1), float(d1 @ b1 @ d2), float(d2 @ b1 @ d2)
    q211, q212, q222 = float(d1 @ b2 @ d1), float(d1 @ b2 @ d2), float(d2 @ b2 @ d2)

    g0 = b11 * q211 - b21 * q111
    g1 = b11 * 2.0 * q212 + b12 * q211 - (b21 * 2.0 * q112 + b22 * q111)
    g2 = b11 * q222 + b12 * 2.0 * q212 - (b21 * q122 + b22 * 2.0 * q112)
    g3 = b12 * q222 - b22 * q122
    return (g3, g2, g1, g0), s0, d1, d2, b1, b2, nullb


def cubic_discriminant(coeffs):
    """Normalized discriminant of a cubic (zero on the double-root set)."""
    c3, c2, c1, c0 = coeffs
    scale = max(abs(c3), abs(c2), abs(c1), abs(c0))
    if scale <= 0.0:
        return 0.0
    c3, c2, c1, c0 = c3 / scale, c2 / scale, c1 / scale, c0 / scale
    return (18.0 * c3 * c2 * c1 * c0 - 4.0 * c2 ** 3 * c0
            + c2 ** 2 * c1 ** 2 - 4.0 * c3 * c1 ** 3
            - 27.0 * c3 ** 2 * c0 ** 2)


def sixth_point_candidates(q1, q2, q3, tol=1e-8):
    """Sixth-point candidates (one to three unit quadruples) from three views.

    Intersects the two rank-one consistency conics on the three-dimensional
    nullspace of the stacked quadric coefficients.  The basis point
    (1,1,1,1), always a common solution, anchors a pencil of lines whose
    second intersections with both conics coincide exactly at the roots of a
    cubic in the pencil parameter.
    """
    (g3, g2, g1, g0), s0, d1, d2, b1, b2, nullb = pencil_cubic(q1, q2, q3, tol)
    m0 = np.ones(6) / np.sqrt(6.0)
    scale = max(abs(g0), abs(g1), abs(g2), abs(g3))
    if scale <= 0.0:
        raise NoRealCandidate("pencil cubic vanishes identically")

    directions = [d1 + t * d2 for t in cubic_real_roots(g3, g2, g1, g0)]
    if abs(g3) <= 1e-10 * scale:
        directions.append(d2)  # root at infinity of the dehomogenized cubic
    if not directions:
        raise NoRealCandidate("pencil cubic has no usable real root")

    candidates = []
    n_basis_hits = 0
    quadrics = (q1, q2, q3)
    for d in directions:
        d = d / np.linalg.norm(d)
        # second intersection of the line through s0, taken from the
        # better-conditioned conic
        pair1 = np.array([-float(d @ b1 @ d), 2.0 * float(s0 @ b1 @ d)])
        pair2 = np.array([-float(d @ b2 @ d), 2.0 * float(s0 @ b2 @ d)])
        uu, ww = pair1 if np.linalg.norm(pair1) >= np.linalg.norm(pair2) else pair2
        alpha = uu * s0 + ww * d
        na = np.linalg.norm(alpha)
        if na < 1e-12:
            continue
        m = nullb @ (alpha / na)
        if abs(m @ m0) > 1.0 - 1e-12:
            n_basis_hits += 1  # the known solution resurfacing
            continue
        x = _recover_point(m)
        if x is None:
            continue
        x = _refine_on_quadrics(quadrics, x)
        if _is_basis_point(x):
            n_basis_hits += 1
            continue
        candidates.append(x)
    if not candidates:
        if n_basis_hits:
            raise BasisPointCoincidence("all roots collapse onto basis points")
        raise NoRealCandidate("no recoverable sixth-point root")
    return candidates


def resect_camera(view_points, world_points, tol=1e-10) -> Camera:
    """Camera from six image/world correspondences.

    Stacks the three cross-product rows per point (rank two each) and takes
    the smallest right singular vector of the 18x12 system; the result has
    unit Frobenius norm and a fixed sign.
    """
    vp = np.asarray(view_points, dtype=float)
    wp = np.asarray(world_points, dtype=float)
    rows = []
    zero4 = np.zeros(4)
    for x, X in zip(vp, wp):
        x1, x2, x3 = x
        rows.append(np.concatenate([zero4, -x3 * X, x2 * X]))
        rows.append(np.concatenate([x3 * X, zero4, -x1 * X]))
        rows.append(np.concatenate([-x2 * X, x1 * X, zero4]))
    system = np.array(rows)
    _, sv, vt = np.linalg.svd(system)
    if sv[10] <= tol * sv[0]:
        raise RankDefect("resection system rank below eleven")
    v = vt[-1]
    i = int(np.argmax(np.abs(v)))
    if v[i] < 0:
        v = -v
    return Camera(v.reshape(3, 4))


def _resect_three(pts, world6, tol=1e-10):
    """Resect all three views in one batched SVD."""
    systems = np.empty((3, 18, 12))
    zero4 = np.zeros(4)
    for v in range(3):
        rows = []
        for x, X in zip(pts[v], world6):
            x1, x2, x3 = x
            rows.append(np.concatenate([zero4, -x3 * X, x2 * X]))
            rows.append(np.concatenate([x3 * X, zero4, -x1 * X]))
            rows.append(np.concatenate([-x2 * X, x1 * X, zero4]))
        systems[v] = rows
    _, sv, vt = np.linalg.svd(systems)
    if np.any(sv[:, 10] <= tol * sv[:, 0]):
        raise RankDefect("resection system rank below eleven")
    cams = []
    for v in range(3):
        vec = vt[v, -1]
        i = int(np.argmax(np.abs(vec)))
        if vec[i] < 0:
            vec = -vec
        cams.append(Camera(vec.reshape(3, 4)))
    return cams


def projective_reconstruction(corr: SixViewCorrespondences, max_rms_px=None):
    """All projective triplets consistent with six three-view correspondences.

    For each sixth-point candidate the three cameras are resected against the
    canonical basis plus the candidate (on the raw image points), then moved
    to the frame with the first camera [I | 0].  Solutions are sorted by
    ascending reprojection residual.
    """
    pts = corr.points
    quadrics = [view_quadric(pts[i]) for i in range(3)]
    candidates = sixth_point_candidates(*quadrics)
    obs_px = pts[:, :, :2] / pts[:, :, 2:3]

    solutions = []
    for x6 in candidates:
        world6 = np.vstack([BASIS5, x6])
        try:
            cams = _resect_three(pts, world6)
            trip = apply_h0(cams[0], cams[1], cams[2], world_points=world6)
            rms = reprojection_rms(trip.cameras, trip.world_points, obs_px)
        except SolverError:
            continue
        if max_rms_px is not None and rms > max_rms_px:
            continue
        solutions.append(replace(trip, x6=x6, residual_px=float(rms)))
    if not solutions:
        raise EmptySolutionSet("all sixth-point candidates failed resection")
    solutions.sort(key=lambda t: t.residual_px)
    return solutions
