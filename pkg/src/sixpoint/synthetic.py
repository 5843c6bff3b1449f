"""Ground-truth scene generation, noise models, oracles, and error metrics.

Randomness comes from counter-based Philox streams keyed by
``(master_seed, stream)``, so per-trial data is reproducible independently of
evaluation order or worker count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DltRankDefect, ResampleExhausted, ZeroTranslation
from .geometry import BASIS5, ProjectiveTriplet, SixViewCorrespondences
from .numerics import min_singular_vector

DATASET_SCHEMA_VERSION = 1


def rng_stream(seed, stream=0):
    """Deterministic generator for (seed, stream); Philox counter-based."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(stream & 0xFFFFFFFFFFFFFFFF)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class SceneConfig:
    """Three-view, six-point setup (defaults follow the benchmark table)."""

    distance_to_scene: float = 1.0
    scene_depth: float = 0.5
    baseline: float = 0.1
    mid_camera_amplitude: float = 0.025
    image_width: int = 352
    image_height: int = 288
    k_true: np.ndarray = field(default_factory=lambda: np.array(
        [[425.0, 0.0, 176.0], [0.0, 425.0, 144.0], [0.0, 0.0, 1.0]]))
    roll_deg: float = 5.0
    #: gaze offset range in degrees; a floor above zero keeps the three
    #: optical axes from meeting in one point, which is a near-critical
    #: motion for auto-calibration
    gaze_jitter_deg: tuple = (2.0, 5.0)
    #: reject scenes whose sixth point sits too close to a face of the
    #: canonical basis tetrahedron or to one of the five basis points; both
    #: are critical configurations for the solver
    min_x6_coordinate: float = 0.01
    min_x6_basis_angle: float = 0.02
    #: reject scenes whose calibration constraints are nearly rank deficient
    #: at the true solution (near-critical motion); the bound is the ninth
    #: singular value of the equilibrated constraint matrix
    min_constraint_conditioning: float = 2e-4
    max_resample: int = 2000


@dataclass(frozen=True)
class TrackConfig:
    """Circular camera track viewed by a shared point cloud."""

    n_cameras: int = 70
    n_points: int = 400
    circle_radius: float = 1.0
    outlier_rate: float = 0.2
    noise_px: float = 1.0
    cloud_half_extent: float = 0.22
    roll_deg: float = 5.0
    gaze_jitter_deg: tuple = (2.0, 5.0)
    image_width: int = 352
    image_height: int = 288
    k_true: np.ndarray = field(default_factory=lambda: np.array(
        [[425.0, 0.0, 176.0], [0.0, 425.0, 144.0], [0.0, 0.0, 1.0]]))
    max_resample: int = 500

    def __post_init__(self):
        if self.n_cameras < 3:
            raise ValueError("a track needs at least three cameras")
        if not 0.0 <= self.outlier_rate < 1.0:
            raise ValueError("outlier rate must be in [0, 1)")


@dataclass
class SyntheticDataset:
    """Ground truth plus (possibly perturbed) observations.

    ``observations`` is (n_cameras, n_points, 2) in pixels; clean datasets
    equal the forward projections exactly.
    """

    k_true: np.ndarray
    rotations: np.ndarray
    translations: np.ndarray
    points: np.ndarray
    observations: np.ndarray
    outlier_mask: np.ndarray
    noise_px: float
    seed: int

    @property
    def n_cameras(self):
        return self.rotations.shape[0]

    @property
    def n_points(self):
        return self.points.shape[0]

    def camera_matrix(self, i):
        return self.k_true @ np.hstack([self.rotations[i],
                                        self.translations[i][:, None]])

    def camera_center(self, i):
        return -self.rotations[i].T @ self.translations[i]

    def correspondences(self, views=(0, 1, 2), points=None) -> SixViewCorrespondences:
        """Homogeneous six-point correspondences for a three-view window."""
        if points is None:
            points = np.arange(6)
        uv = self.observations[np.ix_(list(views), list(points))]
        return SixViewCorrespondences.from_pixels(uv)

    def to_json_dict(self):
        obs = []
        mask = []
        for v in range(self.n_cameras):
            for p in range(self.n_points):
                u, w = self.observations[v, p]
                obs.append([int(v), int(p), float(u), float(w)])
                mask.append(int(self.outlier_mask[v, p]))
        return {
            "version": DATASET_SCHEMA_VERSION,
            "seed": int(self.seed),
            "K": self.k_true.tolist(),
            "cameras": [{"R": self.rotations[i].tolist(),
                         "t": self.translations[i].tolist()}
                        for i in range(self.n_cameras)],
            "points": self.points.tolist(),
            "observations": obs,
            "outlier_mask": mask,
            "noise_px": float(self.noise_px),
        }

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json_dict(cls, data):
        if data.get("version") != DATASET_SCHEMA_VERSION:
            raise ValueError("unsupported dataset schema version")
        k = np.array(data["K"], dtype=float)
        rot = np.array([c["R"] for c in data["cameras"]], dtype=float)
        tr = np.array([c["t"] for c in data["cameras"]], dtype=float)
        pts = np.array(data["points"], dtype=float)
        n_cam, n_pts = rot.shape[0], pts.shape[0]
        obs = np.full((n_cam, n_pts, 2), np.nan)
        mask = np.zeros((n_cam, n_pts), dtype=bool)
        for row, flag in zip(data["observations"], data["outlier_mask"]):
            v, p, u, w = row
            obs[int(v), int(p)] = (float(u), float(w))
            mask[int(v), int(p)] = bool(flag)
        if np.any(np.isnan(obs)):
            raise ValueError("observation table is incomplete")
        return cls(k, rot, tr, pts, obs, mask,
                   float(data["noise_px"]), int(data["seed"]))

    @classmethod
    def load_json(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


# ---------------------------------------------------------------------------
# orientation helpers
# ---------------------------------------------------------------------------

def _look_at(center, target, roll, up=np.array([0.0, 1.0, 0.0])):
    z = target - center
    z = z / np.linalg.norm(z)
    x = np.cross(up, z)
    nx = np.linalg.norm(x)
    if nx < 1e-9:
        x = np.cross(np.array([1.0, 0.0, 0.0]), z)
        nx = np.linalg.norm(x)
    x = x / nx
    y = np.cross(z, x)
    cr, sr = np.cos(roll), np.sin(roll)
    roll_mat = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
    return roll_mat @ np.vstack([x, y, z])


def _axis_angle(axis, angle):
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def _jittered_gaze(rng, center, target, cfg_roll_deg, jitter_range):
    roll = rng.uniform(-np.deg2rad(cfg_roll_deg), np.deg2rad(cfg_roll_deg))
    base = _look_at(center, target, roll)
    lo, hi = jitter_range
    angle = np.deg2rad(rng.uniform(lo, hi))
    axis = rng.normal(size=3)
    return _axis_angle(axis, angle) @ base


def _unit_ball(rng):
    while True:
        u = rng.uniform(-1.0, 1.0, 3)
        if u @ u <= 1.0:
            return u


def _refine_homography(h, src, dst, iters=3):
    """Gauss-Newton on the transfer residuals orthogonal to each target.

    Polishes the algebraic DLT solution; the gauge is fixed by unit
    Frobenius norm.
    """
    h = h / np.linalg.norm(h)
    src_n = src / np.linalg.norm(src, axis=1, keepdims=True)
    dst_n = dst / np.linalg.norm(dst, axis=1, keepdims=True)
    n = len(src_n)
    for _ in range(iters):
        res = []
        jac = []
        for j in range(n):
            y = h @ src_n[j]
            ny = np.linalg.norm(y)
            if ny <= 0:
                return h
            yu = y / ny
            proj = np.eye(4) - np.outer(dst_n[j], dst_n[j])
            res.append(proj @ yu)
            # d yu / d vec(h), with the normalization gauge folded in
            dy = np.zeros((4, 16))
            for a in range(4):
                dy[a, a * 4:a * 4 + 4] = src_n[j]
            dyu = (np.eye(4) - np.outer(yu, yu)) @ dy / ny
            jac.append(proj @ dyu)
        res = np.concatenate(res)
        jac = np.vstack(jac)
        step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        h_new = h + step.reshape(4, 4)
        nh = np.linalg.norm(h_new)
        if nh <= 0 or not np.all(np.isfinite(h_new)):
            break
        h = h_new / nh
    return h


def _truth_conditioning(k, rotations, translations, points):
    """Ninth singular value (relative) of the equilibrated constraint matrix
    at the ground-truth solution; small values flag near-critical motion."""
    from .autocalib import build_constraints
    from .geometry import Camera, apply_h0

    world_h = np.hstack([points, np.ones((6, 1))])
    frame = _canonical_frame(world_h)
    frame_inv = np.linalg.inv(frame)
    cams = [Camera(k @ np.hstack([rotations[i], translations[i][:, None]])
                   @ frame_inv) for i in range(3)]
    trip = apply_h0(cams[0], cams[1], cams[2],
                    world_points=(frame @ world_h.T).T)
    # the absolute dual quadric in the reconstruction frame, analytically:
    # points map by H0^-1 after the canonical frame
    g_total = np.linalg.inv(_h0_of(cams[0])) @ frame
    q_world = np.diag([1.0, 1.0, 1.0, 0.0])
    q_trip = g_total @ q_world @ g_total.T
    if q_trip[2, 2] == 0.0:
        return 0.0
    q_trip = q_trip / q_trip[2, 2]
    lam = float((trip.p2.P @ q_trip @ trip.p2.P.T)[2, 2])
    mu = float((trip.p3.P @ q_trip @ trip.p3.P.T)[2, 2])
    c = build_constraints(trip).c_of(lam, mu)
    c = c / np.maximum(np.max(np.abs(c), axis=1, keepdims=True), 1e-300)
    c = c / np.maximum(np.max(np.abs(c), axis=0, keepdims=True), 1e-300)
    sv = np.linalg.svd(c, compute_uv=False)
    return float(sv[8] / sv[0])


def _h0_of(cam):
    """Inverse of the point map applied by apply_h0 for the first camera."""
    a_block, a_vec = cam.P[:, :3], cam.P[:, 3]
    h0 = np.eye(4)
    h0[:3, :3] = np.linalg.inv(a_block)
    h0[:3, 3] = -h0[:3, :3] @ a_vec
    return h0


def _canonical_frame(points_h):
    """4x4 map sending the first five homogeneous points to the basis."""
    cols = np.column_stack([points_h[i] / np.linalg.norm(points_h[i])
                            for i in range(4)])
    x5 = points_h[4] / np.linalg.norm(points_h[4])
    d = np.linalg.solve(cols, x5)
    return np.linalg.inv(cols * d[None, :])


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def generate_scene(cfg: SceneConfig, seed, stream=0) -> SyntheticDataset:
    """Three cameras and six points in the benchmark configuration.

    Six points fill a box of the configured depth around the viewing
    distance; the outer camera centers are one baseline apart and the middle
    center is perturbed inside a ball around their midpoint.  Scenes whose
    projections leave the frame, have non-positive depth, or put the sixth
    point near a basis-tetrahedron face are rejected and resampled.
    """
    rng = rng_stream(seed, stream)
    k = cfg.k_true
    w, h = float(cfg.image_width), float(cfg.image_height)
    half_depth = 0.5 * cfg.scene_depth
    for _ in range(cfg.max_resample):
        pts = np.column_stack([
            rng.uniform(-0.25, 0.25, 6),
            rng.uniform(-0.20, 0.20, 6),
            rng.uniform(cfg.distance_to_scene - half_depth,
                        cfg.distance_to_scene + half_depth, 6),
        ])
        centroid = pts.mean(axis=0)
        direction = rng.normal(size=3)
        direction = direction / np.linalg.norm(direction)
        c1 = -0.5 * cfg.baseline * direction
        c3 = 0.5 * cfg.baseline * direction
        c2 = 0.5 * (c1 + c3) + cfg.mid_camera_amplitude * _unit_ball(rng)

        rotations, translations = [], []
        obs = np.zeros((3, 6, 2))
        ok = True
        for i, center in enumerate((c1, c2, c3)):
            rot = _jittered_gaze(rng, center, centroid, cfg.roll_deg,
                                 cfg.gaze_jitter_deg)
            t = -rot @ center
            cam = k @ np.hstack([rot, t[:, None]])
            proj = (cam @ np.vstack([pts.T, np.ones(6)])).T
            if np.any(proj[:, 2] <= 0):
                ok = False
                break
            uv = proj[:, :2] / proj[:, 2:3]
            if (uv[:, 0].min() < 0 or uv[:, 0].max() > w
                    or uv[:, 1].min() < 0 or uv[:, 1].max() > h):
                ok = False
                break
            rotations.append(rot)
            translations.append(t)
            obs[i] = uv
        if not ok:
            continue
        if cfg.min_x6_coordinate > 0 or cfg.min_x6_basis_angle > 0:
            world_h = np.hstack([pts, np.ones((6, 1))])
            try:
                frame = _canonical_frame(world_h)
            except np.linalg.LinAlgError:
                continue
            x6 = frame @ world_h[5]
            if np.min(np.abs(x6)) < cfg.min_x6_coordinate * np.max(np.abs(x6)):
                continue
            x6u = x6 / np.linalg.norm(x6)
            units = BASIS5 / np.linalg.norm(BASIS5, axis=1, keepdims=True)
            dots = units @ x6u
            sines = np.linalg.norm(x6u[None, :] - dots[:, None] * units, axis=1)
            if np.min(sines) < cfg.min_x6_basis_angle:
                continue
        if cfg.min_constraint_conditioning > 0:
            try:
                cond = _truth_conditioning(k, rotations, translations, pts)
            except np.linalg.LinAlgError:
                continue
            if cond < cfg.min_constraint_conditioning:
                continue
        return SyntheticDataset(
            k_true=k.copy(),
            rotations=np.array(rotations),
            translations=np.array(translations),
            points=pts,
            observations=obs,
            outlier_mask=np.zeros((3, 6), dtype=bool),
            noise_px=0.0,
            seed=int(seed),
        )
    raise ResampleExhausted("could not generate an in-frame scene")


def generate_track(cfg: TrackConfig, seed, stream=0) -> SyntheticDataset:
    """Cameras equally spaced on a circle, all viewing a shared point cloud.

    Points are resampled until every one projects inside every frame with
    positive depth.
    """
    rng = rng_stream(seed, stream)
    k = cfg.k_true
    w, h = float(cfg.image_width), float(cfg.image_height)
    half = cfg.cloud_half_extent * cfg.circle_radius

    def draw_points(n):
        return np.column_stack([
            rng.uniform(-half, half, n),
            rng.uniform(-0.9 * half, 0.9 * half, n),
            rng.uniform(-half, half, n),
        ])

    pts = draw_points(cfg.n_points)
    rotations, translations = [], []
    for i in range(cfg.n_cameras):
        theta = 2.0 * np.pi * i / cfg.n_cameras
        center = cfg.circle_radius * np.array([np.cos(theta), 0.0, np.sin(theta)])
        rot = _jittered_gaze(rng, center, np.zeros(3), cfg.roll_deg,
                             cfg.gaze_jitter_deg)
        rotations.append(rot)
        translations.append(-rot @ center)
    rotations = np.array(rotations)
    translations = np.array(translations)
    cams = [k @ np.hstack([rotations[i], translations[i][:, None]])
            for i in range(cfg.n_cameras)]

    for _ in range(cfg.max_resample):
        bad = np.zeros(cfg.n_points, dtype=bool)
        for cam in cams:
            proj = (cam @ np.vstack([pts.T, np.ones(cfg.n_points)])).T
            uv = proj[:, :2] / proj[:, 2:3]
            bad |= (proj[:, 2] <= 0)
            bad |= (uv[:, 0] < 0) | (uv[:, 0] > w) | (uv[:, 1] < 0) | (uv[:, 1] > h)
        if not np.any(bad):
            break
        pts[bad] = draw_points(int(np.sum(bad)))
    else:
        raise ResampleExhausted("could not make all points visible everywhere")

    obs = np.zeros((cfg.n_cameras, cfg.n_points, 2))
    for i, cam in enumerate(cams):
        proj = (cam @ np.vstack([pts.T, np.ones(cfg.n_points)])).T
        obs[i] = proj[:, :2] / proj[:, 2:3]
    return SyntheticDataset(
        k_true=k.copy(),
        rotations=rotations,
        translations=translations,
        points=pts,
        observations=obs,
        outlier_mask=np.zeros((cfg.n_cameras, cfg.n_points), dtype=bool),
        noise_px=0.0,
        seed=int(seed),
    )


def add_noise(ds: SyntheticDataset, sigma_px, seed, stream=1) -> SyntheticDataset:
    """Dataset with i.i.d. Gaussian pixel noise on every coordinate."""
    if sigma_px < 0:
        raise ValueError("noise level must be nonnegative")
    obs = ds.observations.copy()
    if sigma_px > 0:
        rng = rng_stream(seed, stream)
        obs = obs + rng.normal(0.0, sigma_px, obs.shape)
    return SyntheticDataset(ds.k_true, ds.rotations, ds.translations, ds.points,
                            obs, ds.outlier_mask.copy(),
                            float(np.hypot(ds.noise_px, sigma_px)), ds.seed)


def add_outliers(ds: SyntheticDataset, rate, seed, stream=2,
                 image_width=352, image_height=288) -> SyntheticDataset:
    """Dataset with a Bernoulli subset replaced by uniform image points."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("outlier rate must be in [0, 1)")
    obs = ds.observations.copy()
    mask = ds.outlier_mask.copy()
    if rate > 0:
        rng = rng_stream(seed, stream)
        hit = rng.uniform(size=mask.shape) < rate
        n = int(np.sum(hit))
        obs[hit, 0] = rng.uniform(0.0, image_width, n)
        obs[hit, 1] = rng.uniform(0.0, image_height, n)
        mask |= hit
    return SyntheticDataset(ds.k_true, ds.rotations, ds.translations, ds.points,
                            obs, mask, ds.noise_px, ds.seed)


# ---------------------------------------------------------------------------
# oracles and metrics
# ---------------------------------------------------------------------------

def oracle_scales(ds: SyntheticDataset, triplet: ProjectiveTriplet,
                  views=(0, 1, 2), points=None):
    """Ground-truth (lambda, mu, x) for a triplet built from clean data.

    Solves the homography taking the six true metric points to the triplet's
    reconstructed points, forms the absolute dual quadric in the projective
    frame normalized to unit (3,3) entry, and reads the scales off the
    (3,3) entries of the camera conics.
    """
    if points is None:
        points = np.arange(6)
    metric_h = np.hstack([ds.points[list(points)], np.ones((6, 1))])
    proj_pts = triplet.world_points

    rows = []
    for j in range(6):
        xp = proj_pts[j] / np.linalg.norm(proj_pts[j])
        xm = metric_h[j] / np.linalg.norm(metric_h[j])
        for a in range(4):
            for b in range(a + 1, 4):
                row = np.zeros(16)
                row[b * 4:b * 4 + 4] += xp[a] * xm
                row[a * 4:a * 4 + 4] -= xp[b] * xm
                rows.append(row)
    system = np.array(rows)
    sv = np.linalg.svd(system, compute_uv=False)
    if sv[14] <= 1e-10 * sv[0]:
        raise DltRankDefect("homography system rank below fifteen")
    h_hat = min_singular_vector(system).reshape(4, 4)
    h_hat = _refine_homography(h_hat, metric_h, proj_pts)

    q_hat = h_hat @ np.diag([1.0, 1.0, 1.0, 0.0]) @ h_hat.T
    if q_hat[2, 2] == 0.0:
        raise DltRankDefect("degenerate quadric normalization")
    q_hat = q_hat / q_hat[2, 2]
    lam = float((triplet.p2.P @ q_hat @ triplet.p2.P.T)[2, 2])
    mu = float((triplet.p3.P @ q_hat @ triplet.p3.P.T)[2, 2])
    x_hat = np.array([q_hat[3, 3], q_hat[0, 3], q_hat[1, 3], q_hat[2, 3],
                      q_hat[0, 0], q_hat[0, 1], q_hat[0, 2],
                      q_hat[1, 1], q_hat[1, 2], 1.0])
    return lam, mu, x_hat


def k_error(k, k_ref):
    """Relative Frobenius distance between two calibration matrices."""
    k = np.asarray(k, dtype=float)
    k_ref = np.asarray(k_ref, dtype=float)
    return float(np.linalg.norm(k - k_ref) / np.linalg.norm(k_ref))


def _relative_pose(ds: SyntheticDataset, view, base_view):
    r_rel = ds.rotations[view] @ ds.rotations[base_view].T
    t_rel = ds.translations[view] - r_rel @ ds.translations[base_view]
    return r_rel, t_rel


def rotation_angle_deg(r_a, r_b):
    """Angle of r_a r_b^T in degrees."""
    c = 0.5 * (np.trace(r_a @ r_b.T) - 1.0)
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def direction_angle_deg(t, t_ref):
    """Angle between two translation directions, in degrees."""
    n1, n2 = np.linalg.norm(t), np.linalg.norm(t_ref)
    if n2 <= 1e-12:
        raise ZeroTranslation("reference translation is zero")
    if n1 <= 1e-12:
        return 90.0
    c = float(np.dot(t, t_ref) / (n1 * n2))
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def pose_errors(result, ds: SyntheticDataset, views=(0, 1, 2)):
    """(rot2, rot3, dir2, dir3) errors in degrees against ground truth.

    The reference poses are expressed relative to the first view of the
    window, matching the solver's output frame.
    """
    r2_ref, t2_ref = _relative_pose(ds, views[1], views[0])
    r3_ref, t3_ref = _relative_pose(ds, views[2], views[0])
    return (
        rotation_angle_deg(result.R2, r2_ref),
        rotation_angle_deg(result.R3, r3_ref),
        direction_angle_deg(result.t2, t2_ref),
        direction_angle_deg(result.t3, t3_ref),
    )
