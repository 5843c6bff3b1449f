"""Projective entities and frame normalizations shared by reconstruction and
calibration.

Conventions: image points are homogeneous triples (u, v, w) in pixel units
with the origin at the top-left corner; world points are homogeneous
quadruples.  Both are plain float ndarrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateQuad,
    PointAtCameraCenter,
    ProjectionAtInfinity,
    SingularFirstCamera,
)

#: the canonical five world points e1..e4, (1,1,1,1)
BASIS5 = np.vstack([np.eye(4), np.ones(4)])


@dataclass(frozen=True)
class Camera:
    """A 3x4 projection matrix with the convenience split P = [A | a]."""

    P: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.shape != (3, 4) or not np.all(np.isfinite(P)):
            raise ValueError("camera matrix must be a finite 3x4 array")
        object.__setattr__(self, "P", P)

    @property
    def A(self):
        return self.P[:, :3]

    @property
    def a(self):
        return self.P[:, 3]

    def center(self):
        """Homogeneous camera center (right null vector of P)."""
        _, _, vt = np.linalg.svd(self.P)
        return vt[-1]


@dataclass(frozen=True)
class ProjectiveTriplet:
    """Three cameras with P1 = [I | 0] plus the six reconstructed points.

    ``world_points`` live in the normalized frame (the same frame as the
    cameras); before normalization the first five were the canonical basis.
    ``x6`` keeps the sixth-point candidate in that canonical frame.
    """

    p1: Camera
    p2: Camera
    p3: Camera
    world_points: np.ndarray
    x6: np.ndarray | None = None
    residual_px: float = field(default=float("nan"))

    @property
    def cameras(self):
        return (self.p1, self.p2, self.p3)


@dataclass(frozen=True)
class SixViewCorrespondences:
    """Six image points seen in three views, homogeneous (3, 6, 3)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.shape != (3, 6, 3):
            raise ValueError("expected a (3, 6, 3) array of homogeneous points")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_pixels(cls, uv):
        """Build from a (3, 6, 2) array of pixel coordinates."""
        uv = np.asarray(uv, dtype=float)
        if uv.shape != (3, 6, 2):
            raise ValueError("expected a (3, 6, 2) array of pixels")
        return cls(np.concatenate([uv, np.ones((3, 6, 1))], axis=2))


def project(p: Camera, x):
    """Homogeneous projection P @ X, without dehomogenization."""
    x = np.asarray(x, dtype=float)
    y = p.P @ x
    if np.linalg.norm(y) <= 1e-12 * np.linalg.norm(p.P) * np.linalg.norm(x):
        raise PointAtCameraCenter("point projects to the zero vector")
    return y


def canonical_plane_basis(x1, x2, x3, x4, tol=1e-8):
    """Homography sending x1..x4 to e1, e2, e3, (1,1,1).

    Unique up to scale; normalized to unit Frobenius norm with the
    largest-magnitude entry positive.
    """
    cols = [np.asarray(x, dtype=float) for x in (x1, x2, x3)]
    m = np.column_stack([c / np.linalg.norm(c) for c in cols])
    x4n = np.asarray(x4, dtype=float)
    x4n = x4n / np.linalg.norm(x4n)
    sv = np.linalg.svd(m, compute_uv=False)
    if sv[-1] <= tol * sv[0]:
        raise DegenerateQuad("first three points are collinear")
    d = np.linalg.solve(m, x4n)
    if np.min(np.abs(d)) <= tol * np.linalg.norm(d):
        raise DegenerateQuad("fourth point lies on a line of the basis triangle")
    t = np.linalg.inv(m * d[None, :])
    t = t / np.linalg.norm(t)
    flat = t.ravel()
    i = int(np.argmax(np.abs(flat)))
    if flat[i] < 0:
        t = -t
    return t


def _normalized_camera(P):
    P = P / np.linalg.norm(P)
    i = int(np.argmax(np.abs(P)))
    if P.ravel()[i] < 0:
        P = -P
    return Camera(P)


def apply_h0(p1: Camera, p2: Camera, p3: Camera, world_points=None,
             cond_limit=1e12) -> ProjectiveTriplet:
    """Move the triplet into the frame where the first camera is [I | 0].

    The first camera is set analytically; the other two are multiplied by the
    normalizing homography and rescaled to unit Frobenius norm.  Optional
    world points are mapped with the inverse homography so projections are
    preserved.
    """
    A1, a1 = p1.A, p1.a
    sv = np.linalg.svd(A1, compute_uv=False)
    if sv[-1] <= 0 or sv[0] / sv[-1] > cond_limit:
        raise SingularFirstCamera("first camera's 3x3 block is ill conditioned")
    h0 = np.eye(4)
    h0[:3, :3] = np.linalg.inv(A1)
    h0[:3, 3] = -h0[:3, :3] @ a1
    p1n = Camera(np.hstack([np.eye(3), np.zeros((3, 1))]))
    p2n = _normalized_camera(p2.P @ h0)
    p3n = _normalized_camera(p3.P @ h0)
    if world_points is None:
        world_points = BASIS5
    # analytic inverse of h0 avoids a second matrix inversion
    h0inv = np.eye(4)
    h0inv[:3, :3] = A1
    h0inv[:3, 3] = a1
    mapped = (h0inv @ np.asarray(world_points, dtype=float).T).T
    return ProjectiveTriplet(p1n, p2n, p3n, mapped)


def reprojection_rms(cams, pts, obs, tol=1e-12):
    """Root-mean-square pixel distance between projections and observations.

    ``obs`` is an (n_cams, n_pts, 2) array of pixel coordinates.
    """
    obs = np.asarray(obs, dtype=float)
    pts = np.asarray(pts, dtype=float)
    sq = []
    for i, cam in enumerate(cams):
        pr = (cam.P @ pts.T).T
        w = pr[:, 2]
        if np.any(np.abs(w) <= tol * np.linalg.norm(pr, axis=1)):
            raise ProjectionAtInfinity("projection with vanishing w")
        uv = pr[:, :2] / w[:, None]
        sq.append(np.sum((uv - obs[i]) ** 2, axis=1))
    return float(np.sqrt(np.mean(np.concatenate(sq))))
