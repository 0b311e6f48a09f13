"""Exception taxonomy for the navigation engine."""


class FluoroNavError(Exception):
    """Base class for all package errors."""


class FrameChainError(FluoroNavError):
    """Transform composition with mismatched frames."""


class InsufficientMarkers(FluoroNavError):
    """Fewer than three point correspondences."""


class DegenerateGeometry(FluoroNavError):
    """Point set is collinear; pose is not unique."""


class ParallelRays(FluoroNavError):
    """Rays are parallel; no unique closest point."""


class DomainError(FluoroNavError):
    """Image point outside the calibrated disc."""


class UnderconstrainedFit(FluoroNavError):
    """Design matrix is rank deficient for the requested degree."""


class AmbiguousMatch(FluoroNavError):
    """Unlabeled observation matching is not one-to-one."""


class InsufficientFiducials(FluoroNavError):
    """Too few upper-plate observations to place the source."""


class IllConditioned(FluoroNavError):
    """Line bundle too close to parallel for a stable solve."""


class ProjectionAtInfinity(FluoroNavError):
    """Projection ray parallel to the detector plane."""


class BehindSource(FluoroNavError):
    """Point lies behind the X-ray source; no physical projection."""


class BodyNotVisible(FluoroNavError):
    """Fewer than three visible markers for a tracked body."""


class IllegalTransition(FluoroNavError):
    """Session command not allowed in the current phase."""


class ReferenceNotAttached(IllegalTransition):
    """Shot requested before the patient reference was attached."""


class UnknownSession(FluoroNavError):
    """No session with the given id."""


class SceneValidationError(FluoroNavError):
    """Malformed scene document; message carries the field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
