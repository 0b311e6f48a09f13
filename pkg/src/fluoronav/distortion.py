"""Synthetic image-intensifier distortion and its fitted inverse.

The forward model combines a radial (pincushion) polynomial with an
S-shaped rotation whose angle grows quadratically with radius. The inverse
is never derived analytically: it is learned from lower-plate fiducials as
a pair of bivariate polynomials, exactly as a calibration shot would do.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import DEFAULT_DEWARP_DEGREE, DEFAULT_IMAGE_RADIUS_PX
from .errors import AmbiguousMatch, DomainError, UnderconstrainedFit

LOWER = "lower"
UPPER = "upper"


@dataclass(frozen=True)
class DistortionParams:
    """Forward warp parameters, all in pixel units about ``center``."""

    k1: float = 0.0                 # px^-2
    k2: float = 0.0                 # px^-4
    s_rot: float = 0.0              # radians reached at the reference radius
    center: tuple[float, float] = (0.0, 0.0)
    reference_radius: float = DEFAULT_IMAGE_RADIUS_PX

    def is_injective_on_disc(self, samples: int = 1024) -> bool:
        # Radial part must be strictly increasing; the rotation term is a
        # bijection at every radius, so injectivity reduces to this check.
        r = np.linspace(0.0, self.reference_radius, samples)
        growth = 1.0 + 3.0 * self.k1 * r**2 + 5.0 * self.k2 * r**4
        return bool(np.all(growth > 0.0))


def distort(p, params: DistortionParams) -> np.ndarray:
    """Apply the forward warp to one point or an (N, 2) array of points.

    Radial scaling uses r' = r (1 + k1 r^2 + k2 r^4); the result is then
    rotated about the center by s_rot * (r / reference_radius)^2, with r
    the undistorted radius.
    """
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    c = np.asarray(params.center, dtype=float)
    rel = pts - c
    r = np.linalg.norm(rel, axis=1)
    if np.any(r > params.reference_radius * (1.0 + 1e-9)):
        raise DomainError("point outside the image disc")
    scale = 1.0 + params.k1 * r**2 + params.k2 * r**4
    scaled = rel * scale[:, None]
    phi = params.s_rot * (r / params.reference_radius) ** 2
    cos, sin = np.cos(phi), np.sin(phi)
    out = np.empty_like(scaled)
    out[:, 0] = cos * scaled[:, 0] - sin * scaled[:, 1]
    out[:, 1] = sin * scaled[:, 0] + cos * scaled[:, 1]
    out += c
    return out[0] if single else out


@dataclass(frozen=True)
class GridObservation:
    """One fiducial seen in one shot: distorted pixel plus known 3D truth."""

    plate: str
    fiducial_id: str
    image_point_px: tuple[float, float]
    truth_3d_mm: tuple[float, float, float]

    def to_dict(self) -> dict:
        return {
            "plate": self.plate,
            "fiducial_id": self.fiducial_id,
            "image_point_px": [float(v) for v in self.image_point_px],
            "truth_3d_mm": [float(v) for v in self.truth_3d_mm],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridObservation":
        return cls(
            d["plate"],
            d["fiducial_id"],
            tuple(d["image_point_px"]),
            tuple(d["truth_3d_mm"]),
        )


def observations_to_json(observations: Iterable[GridObservation]) -> list[dict]:
    return [o.to_dict() for o in observations]


def monomial_exponents(degree: int) -> list[tuple[int, int]]:
    """Bivariate exponents in graded lexicographic order.

    Total degree ascends; within one degree the power of the first
    coordinate descends: (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...
    Serialized coefficient vectors follow exactly this order.
    """
    return [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]


def _design_matrix(points: np.ndarray, center: np.ndarray, domain: float, degree: int) -> np.ndarray:
    uv = (points - center) / domain
    cols = [uv[:, 0] ** i * uv[:, 1] ** j for i, j in monomial_exponents(degree)]
    return np.column_stack(cols)


@dataclass(frozen=True)
class DewarpModel:
    """Fitted inverse map: distorted pixel -> ideal pixel.

    Coefficients are over monomials of (p - center) / domain in graded
    lexicographic order (see ``monomial_exponents``).
    """

    degree: int
    coeffs_x: np.ndarray
    coeffs_y: np.ndarray
    fit_rms: float
    domain: float
    center: tuple[float, float] = (0.0, 0.0)

    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "monomial_order": "grlex",
            "coeffs_x": [float(v) for v in self.coeffs_x],
            "coeffs_y": [float(v) for v in self.coeffs_y],
            "fit_rms_px": float(self.fit_rms),
            "domain_px": float(self.domain),
            "center_px": [float(v) for v in self.center],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DewarpModel":
        return cls(
            int(d["degree"]),
            np.asarray(d["coeffs_x"], dtype=float),
            np.asarray(d["coeffs_y"], dtype=float),
            float(d["fit_rms_px"]),
            float(d["domain_px"]),
            tuple(d["center_px"]),
        )

    @classmethod
    def identity(cls, domain: float = DEFAULT_IMAGE_RADIUS_PX) -> "DewarpModel":
        n = len(monomial_exponents(1))
        cx = np.zeros(n)
        cy = np.zeros(n)
        cx[1] = domain  # x = u * domain
        cy[2] = domain
        return cls(1, cx, cy, 0.0, domain)


def fit_dewarp_points(
    distorted: np.ndarray,
    ideal: np.ndarray,
    degree: int = DEFAULT_DEWARP_DEGREE,
    center=None,
    domain: float | None = None,
) -> DewarpModel:
    """Least-squares polynomial fit from distorted to ideal pixels.

    Center defaults to the centroid of the distorted points and domain to
    their maximum radius, so the fitted model records the disc it actually
    covers.
    """
    distorted = np.asarray(distorted, dtype=float).reshape(-1, 2)
    ideal = np.asarray(ideal, dtype=float).reshape(-1, 2)
    if distorted.shape != ideal.shape:
        raise ValueError("distorted/ideal point counts differ")
    n_terms = len(monomial_exponents(degree))
    if distorted.shape[0] < n_terms:
        raise UnderconstrainedFit(
            f"degree {degree} needs >= {n_terms} observations, got {distorted.shape[0]}"
        )
    c = np.asarray(center, dtype=float) if center is not None else distorted.mean(axis=0)
    dom = float(domain) if domain is not None else float(np.max(np.linalg.norm(distorted - c, axis=1)))
    A = _design_matrix(distorted, c, dom, degree)
    solution, _, rank, _ = np.linalg.lstsq(A, ideal, rcond=None)
    if rank < n_terms:
        raise UnderconstrainedFit(f"design matrix rank {rank} < {n_terms}")
    pred = A @ solution
    rms = float(np.sqrt(np.mean(np.sum((pred - ideal) ** 2, axis=1))))
    return DewarpModel(degree, solution[:, 0].copy(), solution[:, 1].copy(), rms, dom, (float(c[0]), float(c[1])))


def fit_dewarp(
    observations: Sequence[GridObservation],
    ideal_projector: Callable[[GridObservation], np.ndarray],
    degree: int = DEFAULT_DEWARP_DEGREE,
    center=None,
    domain: float | None = None,
) -> DewarpModel:
    """Fit the dewarp from lower-plate observations.

    ``ideal_projector`` supplies each fiducial's undistorted pixel; for the
    lower plate that is just its own position mapped through the detector
    pixel grid.
    """
    lower = [o for o in observations if o.plate == LOWER]
    if not lower:
        raise UnderconstrainedFit("no lower-plate observations")
    distorted = np.array([o.image_point_px for o in lower], dtype=float)
    ideal = np.array([ideal_projector(o) for o in lower], dtype=float)
    return fit_dewarp_points(distorted, ideal, degree=degree, center=center, domain=domain)


def dewarp(p, model: DewarpModel) -> np.ndarray:
    """Evaluate the fitted inverse at one point or an (N, 2) array."""
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    c = np.asarray(model.center, dtype=float)
    r = np.linalg.norm(pts - c, axis=1)
    if np.any(r > model.domain * (1.0 + 1e-9)):
        raise DomainError("point outside the calibrated disc")
    A = _design_matrix(pts, c, model.domain, model.degree)
    out = np.column_stack([A @ model.coeffs_x, A @ model.coeffs_y])
    return out[0] if single else out


def match_unlabeled(
    observed_points: np.ndarray,
    predictions: dict[str, np.ndarray],
) -> dict[str, int]:
    """Assign unlabeled observations to fiducials by nearest prediction.

    Returns fiducial_id -> row index into ``observed_points``. Raises
    AmbiguousMatch when two fiducials claim one observation or a nearest
    neighbour is farther than half the minimum predicted spacing.
    """
    observed = np.asarray(observed_points, dtype=float).reshape(-1, 2)
    ids = sorted(predictions)
    pred = np.array([predictions[i] for i in ids], dtype=float)
    if len(ids) > observed.shape[0]:
        raise AmbiguousMatch("fewer observations than fiducials")
    gaps = np.linalg.norm(pred[:, None, :] - pred[None, :, :], axis=2)
    np.fill_diagonal(gaps, np.inf)
    radius = 0.5 * float(gaps.min())
    dists = np.linalg.norm(pred[:, None, :] - observed[None, :, :], axis=2)
    nearest = np.argmin(dists, axis=1)
    assignment: dict[str, int] = {}
    taken: dict[int, str] = {}
    for fid, row in zip(ids, nearest):
        d = dists[ids.index(fid), row]
        if d > radius:
            raise AmbiguousMatch(f"{fid}: nearest observation {d:.2f} px away exceeds {radius:.2f}")
        if row in taken:
            raise AmbiguousMatch(f"{fid} and {taken[row]} claim the same observation")
        taken[int(row)] = fid
        assignment[fid] = int(row)
    return assignment
