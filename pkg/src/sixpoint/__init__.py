"""Camera auto-calibration from six points in three views.

A non-iterative pipeline: minimal projective reconstruction, then a metric
upgrade through the absolute dual quadric solved by staged Gauss-Jordan
eliminations.  Includes synthetic benchmarks and a preemptive-RANSAC tracking
harness.
"""

from .autocalib import (
    CalibrationResult,
    ConstraintMatrix,
    DualQuadricSolution,
    MONOMIAL18,
    autocalibrate,
    build_constraints,
    calibrate_and_upgrade,
    elimination_pipeline,
    extract_scales,
    recover_dual_quadric,
    shift_row,
    subdeterminant_poly,
)
from .errors import SolverError
from .geometry import (
    BASIS5,
    Camera,
    ProjectiveTriplet,
    SixViewCorrespondences,
    apply_h0,
    canonical_plane_basis,
    project,
    reprojection_rms,
)
from .numerics import (
    RrefResult,
    cholesky_upper_right,
    cubic_real_roots,
    gj_rref,
    min_singular_vector,
    nearest_rotation,
)
from .reconstruction import (
    ViewQuadric,
    projective_reconstruction,
    resect_camera,
    sixth_point_candidates,
    view_quadric,
)
from .robust import (
    MotionHypothesis,
    RansacConfig,
    TrackResult,
    align_similarity,
    pair_fundamental,
    preemptive_ransac,
    sampson_score,
    track_sequence,
)
from .synthetic import (
    SceneConfig,
    SyntheticDataset,
    TrackConfig,
    add_noise,
    add_outliers,
    generate_scene,
    generate_track,
    k_error,
    oracle_scales,
    pose_errors,
    rng_stream,
)

__version__ = "0.1.0"

__all__ = [
    "BASIS5",
    "CalibrationResult",
    "Camera",
    "ConstraintMatrix",
    "DualQuadricSolution",
    "MONOMIAL18",
    "MotionHypothesis",
    "ProjectiveTriplet",
    "RansacConfig",
    "RrefResult",
    "SceneConfig",
    "SixViewCorrespondences",
    "SolverError",
    "SyntheticDataset",
    "TrackConfig",
    "TrackResult",
    "ViewQuadric",
    "add_noise",
    "add_outliers",
    "align_similarity",
    "apply_h0",
    "autocalibrate",
    "build_constraints",
    "calibrate_and_upgrade",
    "canonical_plane_basis",
    "cholesky_upper_right",
    "cubic_real_roots",
    "elimination_pipeline",
    "extract_scales",
    "generate_scene",
    "generate_track",
    "gj_rref",
    "k_error",
    "min_singular_vector",
    "nearest_rotation",
    "oracle_scales",
    "pair_fundamental",
    "pose_errors",
    "preemptive_ransac",
    "project",
    "projective_reconstruction",
    "recover_dual_quadric",
    "reprojection_rms",
    "resect_camera",
    "rng_stream",
    "sampson_score",
    "shift_row",
    "sixth_point_candidates",
    "subdeterminant_poly",
    "track_sequence",
    "view_quadric",
]
