"""Exception hierarchy for the solver and experiment pipeline."""


class SolverError(Exception):
    """Base class for all recoverable solver failures."""


# numeric kernels
class NotPositiveDefinite(SolverError):
    """Symmetric matrix has a non-positive eigenvalue; Cholesky impossible."""


class DegenerateMatrix(SolverError):
    """Matrix is too close to singular for the requested operation."""


class ZeroPolynomial(SolverError):
    """All polynomial coefficients vanish."""


# geometry
class PointAtCameraCenter(SolverError):
    """Projection of a point coinciding with the camera center."""


class DegenerateQuad(SolverError):
    """Three of the four base image points are collinear."""


class SingularFirstCamera(SolverError):
    """Left 3x3 block of the first camera is not invertible."""


class ProjectionAtInfinity(SolverError):
    """Projected point has a vanishing homogeneous w component."""


# six-point reconstruction
class DegenerateView(SolverError):
    """Transformed fifth/sixth point has a zero coordinate."""


class RankDefect(SolverError):
    """Linear system rank is below the required value."""


class NoRealCandidate(SolverError):
    """No usable real solution for the sixth point."""


class BasisPointCoincidence(SolverError):
    """All sixth-point roots collapse onto basis points."""


class EmptySolutionSet(SolverError):
    """Every projective candidate failed the resection guards."""


# autocalibration
class StructuralViolation(SolverError):
    """Subdeterminant polynomial violates its structural zero pattern."""


class BasisOverflow(SolverError):
    """Row shift would leave the fixed monomial basis."""


class PivotPatternBroken(SolverError):
    """Gauss-Jordan pivots did not land on the expected columns."""


class RankUnexpected(SolverError):
    """Constraint matrix rank differs from the expected value of nine."""


class NormalizationFailure(SolverError):
    """Pivot structure leaves the normalization column basic."""


class ImproperRotation(SolverError):
    """Rotation factor of a metric camera has non-positive determinant."""


# synthetic data
class ResampleExhausted(SolverError):
    """Rejection sampling failed to produce a valid configuration."""


class DltRankDefect(SolverError):
    """Homography estimation system is rank deficient."""


class ZeroTranslation(SolverError):
    """Direction error is undefined for a zero translation."""


# robust estimation
class CoincidentCenters(SolverError):
    """Camera pair shares a center; no fundamental matrix exists."""


class NoHypothesis(SolverError):
    """All minimal samples failed to produce a motion hypothesis."""
