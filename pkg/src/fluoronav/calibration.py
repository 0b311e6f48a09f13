"""Two-plate calibration: source estimation and frozen projective views.

The lower plate sits in the detector plane (z = 0 of the grid frame), so
its fiducials are their own ideal projections and train the dewarp. Upper
plate fiducials sit at z = plate_separation; the line from each to its
dewarped image point passes through the X-ray source, and the source is
recovered as the least-squares closest point to that bundle.

A CalibratedView freezes dewarp, source, detector, and the grid-to-patient
transform captured at shot time. Later C-arm motion never touches a view;
that is what lets navigation run with the fluoroscope off.
"""
from __future__ import annotations

import itertools
import uuid
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import (
    DEFAULT_IMAGE_RADIUS_PX,
    DEFAULT_LOWER_COLS,
    DEFAULT_LOWER_ROWS,
    DEFAULT_LOWER_SPACING_MM,
    DEFAULT_MIN_SOURCE_FIDUCIALS,
    DEFAULT_PIXEL_PITCH_MM,
    DEFAULT_PLATE_SEPARATION_MM,
    DEFAULT_UPPER_SPACING_MM,
    TOL,
)
from .distortion import LOWER, UPPER, DewarpModel, GridObservation, dewarp
from .errors import (
    BehindSource,
    IllConditioned,
    InsufficientFiducials,
    ProjectionAtInfinity,
)
from .geometry import GRID, PATIENT_REF, Ray3, RigidTransform
from .tracking import TrackedBody


@dataclass(frozen=True)
class DetectorModel:
    """Pixel grid on the z = 0 plane of the grid frame."""

    pixel_pitch_mm: float = DEFAULT_PIXEL_PITCH_MM
    principal_point_px: tuple[float, float] = (0.0, 0.0)
    image_radius_px: float = DEFAULT_IMAGE_RADIUS_PX

    def px_to_mm(self, p_px) -> np.ndarray:
        p = np.asarray(p_px, dtype=float)
        return (p - np.asarray(self.principal_point_px)) * self.pixel_pitch_mm

    def mm_to_px(self, p_mm) -> np.ndarray:
        p = np.asarray(p_mm, dtype=float)
        return p / self.pixel_pitch_mm + np.asarray(self.principal_point_px)

    def to_dict(self) -> dict:
        return {
            "pixel_pitch_mm": self.pixel_pitch_mm,
            "principal_point_px": list(self.principal_point_px),
            "image_radius_px": self.image_radius_px,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorModel":
        return cls(d["pixel_pitch_mm"], tuple(d["principal_point_px"]), d["image_radius_px"])


@dataclass(frozen=True)
class Fiducial:
    fiducial_id: str
    position_mm: tuple[float, float, float]


@dataclass(frozen=True)
class CalibrationGridGeometry:
    """Radio-opaque fiducials on two parallel plates plus the grid markers."""

    lower_fiducials: tuple[Fiducial, ...]
    upper_fiducials: tuple[Fiducial, ...]
    plate_separation_mm: float
    marker_body: TrackedBody
    detector: DetectorModel

    def __post_init__(self):
        if self.plate_separation_mm <= 0.0:
            raise ValueError("plate_separation_mm must be > 0")
        for f in self.lower_fiducials:
            if abs(f.position_mm[2]) > 1e-9:
                raise ValueError(f"lower fiducial {f.fiducial_id} not in z=0 plane")
        for f in self.upper_fiducials:
            if abs(f.position_mm[2] - self.plate_separation_mm) > 1e-9:
                raise ValueError(f"upper fiducial {f.fiducial_id} not in upper plane")

    def upper_positions(self) -> dict[str, np.ndarray]:
        return {f.fiducial_id: np.asarray(f.position_mm, dtype=float) for f in self.upper_fiducials}


def plate_lattice(rows: int, cols: int, spacing_mm: float, z_mm: float, prefix: str) -> tuple[Fiducial, ...]:
    """Centered rows x cols lattice of fiducials at height z_mm."""
    ys = (np.arange(rows) - (rows - 1) / 2.0) * spacing_mm
    xs = (np.arange(cols) - (cols - 1) / 2.0) * spacing_mm
    out = []
    for r, c in itertools.product(range(rows), range(cols)):
        out.append(Fiducial(f"{prefix}{r * cols + c}", (float(xs[c]), float(ys[r]), float(z_mm))))
    return tuple(out)


def make_grid(
    lower_rows: int = DEFAULT_LOWER_ROWS,
    lower_cols: int = DEFAULT_LOWER_COLS,
    lower_spacing_mm: float = DEFAULT_LOWER_SPACING_MM,
    upper_rows: int = 3,
    upper_cols: int = 3,
    upper_spacing_mm: float = DEFAULT_UPPER_SPACING_MM,
    plate_separation_mm: float = DEFAULT_PLATE_SEPARATION_MM,
    detector: DetectorModel | None = None,
    marker_body: TrackedBody | None = None,
) -> CalibrationGridGeometry:
    detector = detector or DetectorModel()
    if marker_body is None:
        markers = np.array(
            [[250.0, 0.0, 0.0], [-250.0, 0.0, 0.0], [0.0, 250.0, 0.0], [0.0, 0.0, 150.0]]
        )
        marker_body = TrackedBody("c_arm_grid", markers)
    return CalibrationGridGeometry(
        plate_lattice(lower_rows, lower_cols, lower_spacing_mm, 0.0, "L"),
        plate_lattice(upper_rows, upper_cols, upper_spacing_mm, plate_separation_mm, "U"),
        plate_separation_mm,
        marker_body,
        detector,
    )


# ---------------------------------------------------------------------------
# Line-bundle least squares (3x3 normal equations)
# ---------------------------------------------------------------------------

def closest_point_to_lines(origins: np.ndarray, directions: np.ndarray) -> tuple[np.ndarray, float]:
    """Point minimizing summed squared distance to lines; returns (point, rms)."""
    o = np.asarray(origins, dtype=float).reshape(-1, 3)
    d = np.asarray(directions, dtype=float).reshape(-1, 3)
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    proj = np.eye(3)[None, :, :] - d[:, :, None] * d[:, None, :]
    A = proj.sum(axis=0)
    b = np.einsum("nij,nj->i", proj, o)
    if np.linalg.cond(A) > TOL.max_condition_number:
        raise IllConditioned("line bundle close to parallel")
    p = np.linalg.solve(A, b)
    offsets = np.einsum("nij,nj->ni", proj, p[None, :] - o)
    rms = float(np.sqrt(np.mean(np.sum(offsets**2, axis=1))))
    return p, rms


@dataclass(frozen=True)
class SourceEstimate:
    source_grid_mm: np.ndarray
    rms_residual_mm: float
    n_fiducials: int
    low_count_warning: bool


def estimate_source(
    upper_obs: Sequence[tuple[str, np.ndarray]],
    grid: CalibrationGridGeometry,
    min_fiducials: int = DEFAULT_MIN_SOURCE_FIDUCIALS,
) -> SourceEstimate:
    """Source position from dewarped upper-plate observations.

    ``upper_obs``: (fiducial_id, ideal pixel) pairs. Each pair defines the
    back-projection line joining the fiducial's 3D position to its image
    point on the detector plane; the source is the least-squares closest
    point to the bundle. Fewer than ``min_fiducials`` observations flags a
    warning; fewer than 2 is an error.
    """
    positions = grid.upper_positions()
    origins, dirs = [], []
    for fid, px in upper_obs:
        f3d = positions[fid]
        det = np.append(grid.detector.px_to_mm(px), 0.0)
        origins.append(det)
        dirs.append(f3d - det)
    if len(origins) < 2:
        raise InsufficientFiducials(f"need >=2 upper-plate observations, got {len(origins)}")
    source, rms = closest_point_to_lines(np.array(origins), np.array(dirs))
    return SourceEstimate(source, rms, len(origins), len(origins) < min_fiducials)


# ---------------------------------------------------------------------------
# Calibrated views
# ---------------------------------------------------------------------------

def pinhole_to_detector(source: np.ndarray, p_grid: np.ndarray) -> np.ndarray:
    """Intersection with z = 0 of the ray from source through a grid point."""
    source = np.asarray(source, dtype=float)
    p = np.asarray(p_grid, dtype=float)
    dz = source[2] - p[2]
    if abs(dz) < 1e-9:
        raise ProjectionAtInfinity("ray parallel to detector plane")
    t = source[2] / dz
    if t <= 0.0:
        raise BehindSource("point behind the X-ray source")
    hit = source + t * (p - source)
    return hit[:2]


@dataclass(frozen=True)
class CalibratedView:
    """Frozen snapshot of one shot; immutable after construction."""

    view_id: str
    label: str
    dewarp: DewarpModel
    source_grid_mm: np.ndarray
    detector: DetectorModel
    grid_to_ref: RigidTransform
    plate_separation_mm: float
    source_residual_mm: float = 0.0
    low_fiducial_warning: bool = False

    def __post_init__(self):
        s = np.asarray(self.source_grid_mm, dtype=float).reshape(3).copy()
        s.setflags(write=False)
        object.__setattr__(self, "source_grid_mm", s)
        if s[2] <= self.plate_separation_mm:
            raise ValueError("source must lie beyond the upper plate")
        if (
            self.grid_to_ref.from_frame != GRID
            or self.grid_to_ref.to_frame != PATIENT_REF
        ):
            raise ValueError("grid_to_ref must map grid -> patient_ref")

    def to_dict(self) -> dict:
        return {
            "view_id": self.view_id,
            "label": self.label,
            "dewarp": self.dewarp.to_dict(),
            "source_grid_mm": [float(v) for v in self.source_grid_mm],
            "detector": self.detector.to_dict(),
            "grid_to_ref": self.grid_to_ref.to_dict(),
            "plate_separation_mm": self.plate_separation_mm,
            "source_residual_mm": self.source_residual_mm,
            "low_fiducial_warning": self.low_fiducial_warning,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibratedView":
        return cls(
            d["view_id"],
            d["label"],
            DewarpModel.from_dict(d["dewarp"]),
            np.asarray(d["source_grid_mm"], dtype=float),
            DetectorModel.from_dict(d["detector"]),
            RigidTransform.from_dict(d["grid_to_ref"]),
            d["plate_separation_mm"],
            d["source_residual_mm"],
            d["low_fiducial_warning"],
        )


def project(view: CalibratedView, p_ref) -> np.ndarray:
    """Project a patient-frame point into ideal detector millimeters."""
    p_grid = view.grid_to_ref.inverse().apply(np.asarray(p_ref, dtype=float))
    return pinhole_to_detector(view.source_grid_mm, p_grid)


def back_projection_ray(view: CalibratedView, image_point_mm) -> Ray3:
    """Patient-frame ray from the source through a detector point."""
    det = np.append(np.asarray(image_point_mm, dtype=float), 0.0)
    origin = view.grid_to_ref.apply(view.source_grid_mm)
    through = view.grid_to_ref.apply(det)
    return Ray3(origin, through - origin)


def triangulate(
    views: Sequence[CalibratedView],
    image_points_mm: Sequence,
) -> tuple[np.ndarray, float]:
    """Least-squares 3D point from one detector point per view.

    The dual of multi-view projection: back-projection rays expressed in
    the shared patient frame are intersected; the gap is the rms distance
    of the solution to the rays.
    """
    if len(views) < 2 or len(views) != len(image_points_mm):
        raise InsufficientFiducials("triangulation needs one image point in each of >=2 views")
    rays = [back_projection_ray(v, p) for v, p in zip(views, image_points_mm)]
    origins = np.array([r.origin for r in rays])
    dirs = np.array([r.direction for r in rays])
    return closest_point_to_lines(origins, dirs)


def build_view(
    label: str,
    observations: Sequence[GridObservation],
    grid: CalibrationGridGeometry,
    grid_to_ref: RigidTransform,
    dewarp_model: DewarpModel,
    view_id: str | None = None,
) -> CalibratedView:
    """Assemble a frozen view from one shot's observations.

    Upper-plate observations are dewarped with the freshly fitted model
    before source estimation, mirroring the physical calibration order.
    """
    upper = [
        (o.fiducial_id, dewarp(np.asarray(o.image_point_px), dewarp_model))
        for o in observations
        if o.plate == UPPER
    ]
    est = estimate_source(upper, grid)
    return CalibratedView(
        view_id or uuid.uuid4().hex[:12],
        label,
        dewarp_model,
        est.source_grid_mm,
        grid.detector,
        grid_to_ref,
        grid.plate_separation_mm,
        est.rms_residual_mm,
        est.low_count_warning,
    )
