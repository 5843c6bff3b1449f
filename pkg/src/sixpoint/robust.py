"""Preemptive RANSAC around the auto-calibration solver.

Motion hypotheses come from minimal six-point samples; observations are
scored in randomized blocks with a truncated Sampson error, and the
hypothesis set is halved after every block.  A sliding three-view window over
a camera sequence yields per-window calibrations, an averaged calibration
matrix, and a chained camera track.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autocalib import CalibrationResult, autocalibrate
from .errors import CoincidentCenters, NoHypothesis
from .geometry import Camera, SixViewCorrespondences
from .synthetic import SyntheticDataset, rng_stream


@dataclass(frozen=True)
class RansacConfig:
    n_hypotheses: int = 400
    block_size: int = 100
    sampson_threshold_px2: float = 4.0
    seed: int = 0
    #: cap on minimal-sample draws while filling the hypothesis budget
    max_sample_factor: int = 10

    def __post_init__(self):
        if self.n_hypotheses < 1 or self.block_size < 1:
            raise ValueError("hypothesis count and block size must be positive")


@dataclass(frozen=True)
class MotionHypothesis:
    """Calibration for a three-view window plus its pairwise epipolar geometry."""

    calibration: CalibrationResult
    f12: np.ndarray
    f23: np.ndarray
    f13: np.ndarray

    @classmethod
    def from_calibration(cls, result: CalibrationResult):
        p1, p2, p3 = result.metric_cameras()
        return cls(result,
                   pair_fundamental(p1, p2),
                   pair_fundamental(p2, p3),
                   pair_fundamental(p1, p3))


def pair_fundamental(pa: Camera, pb: Camera, tol=1e-9):
    """Fundamental matrix of a camera pair, unit Frobenius norm, fixed sign.

    Uses the epipole formula F = [P_b C_a]_x P_b P_a^+, valid for arbitrary
    projective cameras.
    """
    center_a = pa.center()
    e_b = pb.P @ center_a
    if np.linalg.norm(e_b) <= tol * np.linalg.norm(pb.P):
        raise CoincidentCenters("camera pair shares a center")
    ex = np.array([[0.0, -e_b[2], e_b[1]],
                   [e_b[2], 0.0, -e_b[0]],
                   [-e_b[1], e_b[0], 0.0]])
    f = ex @ pb.P @ np.linalg.pinv(pa.P)
    f = f / np.linalg.norm(f)
    i = int(np.argmax(np.abs(f)))
    if f.ravel()[i] < 0:
        f = -f
    return f


def _sampson(f, xa, xb):
    """Per-match Sampson error for stacked homogeneous points (N, 3)."""
    fx = xa @ f.T
    ftx = xb @ f
    num = np.sum(xb * fx, axis=1) ** 2
    den = fx[:, 0] ** 2 + fx[:, 1] ** 2 + ftx[:, 0] ** 2 + ftx[:, 1] ** 2
    return num / np.maximum(den, 1e-300)


def hypothesis_errors(h: MotionHypothesis, matches):
    """Per-pair Sampson errors, shape (3, N); matches is (3, N, 2)."""
    m = np.asarray(matches, dtype=float)
    xh = np.concatenate([m, np.ones((3, m.shape[1], 1))], axis=2)
    return np.vstack([_sampson(h.f12, xh[0], xh[1]),
                      _sampson(h.f23, xh[1], xh[2]),
                      _sampson(h.f13, xh[0], xh[2])])


def truncated_errors(h: MotionHypothesis, matches, cfg: RansacConfig):
    """Per-match robust cost: per-pair truncation summed over the three pairs."""
    e = np.minimum(hypothesis_errors(h, matches), cfg.sampson_threshold_px2)
    return e.sum(axis=0)


def sampson_score(h: MotionHypothesis, matches, cfg: RansacConfig):
    """Robust window score: sum of min(e, threshold) over matches and pairs."""
    return float(np.sum(truncated_errors(h, matches, cfg)))


def generate_hypotheses(matches, cfg: RansacConfig, rng):
    """Up to cfg.n_hypotheses motion hypotheses from random minimal samples.

    Every calibration root of a sample consumes one hypothesis slot.
    """
    m = np.asarray(matches, dtype=float)
    n = m.shape[1]
    if n < 6:
        raise NoHypothesis("fewer than six matches")
    hyps = []
    attempts = 0
    max_attempts = cfg.max_sample_factor * max(cfg.n_hypotheses, 10)
    while len(hyps) < cfg.n_hypotheses and attempts < max_attempts:
        attempts += 1
        sel = rng.choice(n, 6, replace=False)
        corr = SixViewCorrespondences.from_pixels(m[:, sel])
        for result in autocalibrate(corr):
            try:
                hyps.append(MotionHypothesis.from_calibration(result))
            except CoincidentCenters:
                continue
            if len(hyps) >= cfg.n_hypotheses:
                break
    if not hyps:
        raise NoHypothesis("no minimal sample produced a calibration")
    return hyps


def preemption_schedule(n_hypotheses, block_index):
    """Survivor count after scoring ``block_index`` blocks."""
    return max(1, int(n_hypotheses * 2.0 ** (-block_index)))


def preemptive_ransac(matches, cfg: RansacConfig) -> MotionHypothesis:
    """Best motion hypothesis for a three-view window of matches.

    Observations are scored in a random order in blocks; after each block the
    survivor set is halved, keeping the best cumulative truncated-Sampson
    scores.  The reduction is deterministic for a fixed config seed.
    """
    m = np.asarray(matches, dtype=float)
    n = m.shape[1]
    rng = rng_stream(cfg.seed, 0)
    hyps = generate_hypotheses(m, cfg, rng)

    errors = np.vstack([truncated_errors(h, m, cfg) for h in hyps])
    order = rng.permutation(n)

    alive = np.arange(len(hyps))
    totals = np.zeros(len(hyps))
    consumed = 0
    block = 0
    while consumed < n and len(alive) > 1:
        chunk = order[consumed:consumed + cfg.block_size]
        totals[alive] += errors[np.ix_(alive, chunk)].sum(axis=1)
        consumed += len(chunk)
        block += 1
        keep = preemption_schedule(cfg.n_hypotheses, block)
        if keep < len(alive):
            ranks = np.argsort(totals[alive], kind="stable")
            alive = alive[ranks[:keep]]
    if len(alive) > 1:
        ranks = np.argsort(totals[alive], kind="stable")
        alive = alive[ranks[:1]]
    return hyps[int(alive[0])]


# ---------------------------------------------------------------------------
# sequence tracking
# ---------------------------------------------------------------------------

@dataclass
class TrackResult:
    """Per-window calibrations plus the chained global track."""

    window_results: list
    averaged_k: np.ndarray | None
    rotations: np.ndarray
    centers: np.ndarray
    placed: np.ndarray


def track_sequence(ds: SyntheticDataset, cfg: RansacConfig) -> TrackResult:
    """Sliding-window robust calibration over a camera sequence.

    Each window (i, i+1, i+2) runs preemptive RANSAC seeded per window; the
    calibration matrix is averaged entrywise over the accepted windows, and
    relative poses are chained into a global track whose scale comes from the
    first window.  Window failures are recorded and skipped.
    """
    n = ds.n_cameras
    if n < 3:
        raise ValueError("sequence needs at least three cameras")
    window_results = []
    for w in range(n - 2):
        matches = ds.observations[w:w + 3]
        wcfg = RansacConfig(
            n_hypotheses=cfg.n_hypotheses,
            block_size=cfg.block_size,
            sampson_threshold_px2=cfg.sampson_threshold_px2,
            seed=int(rng_stream(cfg.seed, w).integers(0, 2 ** 62)),
            max_sample_factor=cfg.max_sample_factor,
        )
        try:
            best = preemptive_ransac(matches, wcfg)
            window_results.append(best.calibration)
        except NoHypothesis:
            window_results.append(None)

    accepted = [r for r in window_results if r is not None]
    averaged_k = None
    if accepted:
        averaged_k = np.mean([r.K for r in accepted], axis=0)

    rotations = np.full((n, 3, 3), np.nan)
    centers = np.full((n, 3), np.nan)
    placed = np.zeros(n, dtype=bool)
    rotations[0] = np.eye(3)
    centers[0] = 0.0
    placed[0] = True
    pose_r = [None] * n
    pose_t = [None] * n
    pose_r[0] = np.eye(3)
    pose_t[0] = np.zeros(3)
    alpha = 1.0
    for w, res in enumerate(window_results):
        if res is None or pose_r[w] is None:
            continue
        if pose_r[w + 1] is not None and np.linalg.norm(res.t2) > 1e-12:
            rel_r = pose_r[w + 1] @ pose_r[w].T
            rel_t = pose_t[w + 1] - rel_r @ pose_t[w]
            alpha = float(np.linalg.norm(rel_t) / np.linalg.norm(res.t2))
        if pose_r[w + 1] is None:
            pose_r[w + 1] = res.R2 @ pose_r[w]
            pose_t[w + 1] = res.R2 @ pose_t[w] + alpha * res.t2
        if pose_r[w + 2] is None:
            pose_r[w + 2] = res.R3 @ pose_r[w]
            pose_t[w + 2] = res.R3 @ pose_t[w] + alpha * res.t3
    for i in range(n):
        if pose_r[i] is not None:
            rotations[i] = pose_r[i]
            centers[i] = -pose_r[i].T @ pose_t[i]
            placed[i] = True
    return TrackResult(window_results, averaged_k, rotations, centers, placed)


def align_similarity(est, ref):
    """Similarity (scale, rotation, translation) aligning est onto ref.

    Returns the transformed points and the RMS alignment error.  Rows with
    NaNs in ``est`` are ignored for the fit and produce NaN outputs.
    """
    est = np.asarray(est, dtype=float)
    ref = np.asarray(ref, dtype=float)
    valid = ~np.any(np.isnan(est), axis=1)
    if np.sum(valid) < 3:
        raise ValueError("need at least three placed points to align")
    a = est[valid]
    b = ref[valid]
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    a0, b0 = a - ca, b - cb
    u, sv, vt = np.linalg.svd(a0.T @ b0)
    d = np.sign(np.linalg.det(u @ vt))
    corr = np.diag([1.0, 1.0, d])
    rot = (u @ corr @ vt).T
    denom = np.sum(a0 * a0)
    scale = float(np.sum(sv * np.diag(corr)) / denom) if denom > 0 else 1.0
    out = np.full_like(est, np.nan)
    out[valid] = scale * (a @ rot.T) + (cb - scale * (rot @ ca))
    rms = float(np.sqrt(np.mean(np.sum((out[valid] - b) ** 2, axis=1))))
    return out, rms
