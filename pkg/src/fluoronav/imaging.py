"""Synthetic shot acquisition and radiation exposure accounting.

This is the only place where X-rays "fire": every shot forward-projects
grid fiducials and phantom landmarks through the true source, applies the
forward distortion and image noise, and appends an exposure event.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calibration import CalibrationGridGeometry, pinhole_to_detector
from .distortion import LOWER, UPPER, DistortionParams, GridObservation, distort
from .errors import BehindSource, ProjectionAtInfinity
from .geometry import RigidTransform, compose

CALIBRATION_SHOT = "calibration_shot"
NAV_SHOT = "nav_shot"
CONTINUOUS_RUN = "continuous_run"


@dataclass(frozen=True)
class ExposureEvent:
    timestamp_ms: int
    duration_s: float
    kind: str

    def __post_init__(self):
        if self.duration_s <= 0.0:
            raise ValueError("exposure duration must be > 0")

    def to_dict(self) -> dict:
        return {"timestamp_ms": self.timestamp_ms, "duration_s": self.duration_s, "kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "ExposureEvent":
        return cls(d["timestamp_ms"], d["duration_s"], d["kind"])


@dataclass
class ExposureLog:
    events: list[ExposureEvent] = field(default_factory=list)

    def append(self, event: ExposureEvent) -> None:
        self.events.append(event)

    @property
    def total_s(self) -> float:
        return float(sum(e.duration_s for e in self.events))

    def to_dict(self) -> dict:
        return {"events": [e.to_dict() for e in self.events], "total_s": self.total_s}

    @classmethod
    def from_dict(cls, d: dict) -> "ExposureLog":
        return cls([ExposureEvent.from_dict(e) for e in d["events"]])


def exposure_compare(virtual: ExposureLog, conventional: ExposureLog) -> float:
    """Ratio of accumulated radiation-on time, virtual over conventional."""
    if not virtual.events or not conventional.events:
        raise ValueError("both exposure logs must be non-empty")
    total = conventional.total_s
    if total == 0.0:
        raise ZeroDivisionError("conventional exposure total is zero")
    return virtual.total_s / total


@dataclass(frozen=True)
class ShotResult:
    observations: tuple[GridObservation, ...]
    landmarks_px: tuple[tuple[float, float], ...]  # distorted pixel scatter
    empty_shot: bool
    exposure_event: ExposureEvent


def _project_to_pixels(source, p_grid, detector, params, rng, noise_px):
    try:
        hit = pinhole_to_detector(source, p_grid)
    except (ProjectionAtInfinity, BehindSource):
        return None
    px = detector.mm_to_px(hit)
    if np.linalg.norm(px - np.asarray(detector.principal_point_px)) > detector.image_radius_px:
        return None
    px = distort(px, params)
    if noise_px > 0.0:
        px = px + rng.normal(scale=noise_px, size=2)
    return px


def acquire_shot(
    c_arm_pose: RigidTransform,  # grid body -> tracker
    ref_pose: RigidTransform,  # patient_ref body -> tracker
    grid: CalibrationGridGeometry,
    landmarks_ref: np.ndarray,
    source_grid_mm,
    distortion_params: DistortionParams,
    image_noise_sigma_px: float,
    rng: np.random.Generator,
    timestamp_ms: int,
    duration_s: float,
    kind: str = CALIBRATION_SHOT,
) -> ShotResult:
    """Expose one synthetic radiograph.

    All fiducials and patient landmarks are projected through the true
    source; anything outside the circular image field is simply not seen.
    A shot whose landmarks all miss the field is flagged empty. Exactly one
    exposure event is emitted per shot, no matter what was seen.
    """
    source = np.asarray(source_grid_mm, dtype=float)
    detector = grid.detector
    observations: list[GridObservation] = []
    for plate, fiducials in ((LOWER, grid.lower_fiducials), (UPPER, grid.upper_fiducials)):
        for f in fiducials:
            px = _project_to_pixels(
                source, np.asarray(f.position_mm), detector, distortion_params, rng, image_noise_sigma_px
            )
            if px is not None:
                observations.append(GridObservation(plate, f.fiducial_id, tuple(px), f.position_mm))

    ref_to_grid = compose(c_arm_pose.inverse(), ref_pose)
    landmarks_px = []
    for p_ref in np.asarray(landmarks_ref, dtype=float).reshape(-1, 3):
        px = _project_to_pixels(
            source, ref_to_grid.apply(p_ref), detector, distortion_params, rng, image_noise_sigma_px
        )
        if px is not None:
            landmarks_px.append((float(px[0]), float(px[1])))

    event = ExposureEvent(timestamp_ms, duration_s, kind)
    return ShotResult(tuple(observations), tuple(landmarks_px), len(landmarks_px) == 0, event)
