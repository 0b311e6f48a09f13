"""Virtual-fluoroscopy core: live tool overlays in frozen calibrated views.

Rendering consumes only CalibratedViews and TrackerFrames. There is no
path from here to the synthetic imaging operation, so nothing in the
navigation loop can peek at a fresh X-ray without an explicit shot event.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import CalibratedView, project
from .config import (
    DEFAULT_AXIS_SAMPLES,
    DEFAULT_FORWARD_EXTENSION_MM,
    DEFAULT_MAX_STEER_ROTATION_DEG,
    DEFAULT_MAX_STEER_TRANSLATION_MM,
)
from .errors import BehindSource, ProjectionAtInfinity
from .geometry import (
    PATIENT_REF,
    Ray3,
    RigidTransform,
    compose,
    rotation_vector_to_matrix,
)
from .tracking import TrackedBody, TrackerFrame, TrackerSimulator, tool_tip_and_axis


@dataclass(frozen=True)
class PlannedTrajectory:
    """Entry point, insertion direction and depth, in the patient frame."""

    entry_mm: tuple[float, float, float]
    direction: tuple[float, float, float]
    depth_mm: float

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        object.__setattr__(self, "direction", tuple(d / np.linalg.norm(d)))

    @property
    def ray(self) -> Ray3:
        return Ray3(np.asarray(self.entry_mm), np.asarray(self.direction))

    def to_dict(self) -> dict:
        return {
            "entry_mm": [float(v) for v in self.entry_mm],
            "direction": [float(v) for v in self.direction],
            "depth_mm": float(self.depth_mm),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlannedTrajectory":
        return cls(tuple(d["entry_mm"]), tuple(d["direction"]), float(d["depth_mm"]))


@dataclass(frozen=True)
class OverlaySegment:
    """Projected tool tip and axis polyline for one view.

    ``error`` is set (and the geometry empty) when this view alone failed;
    other views keep rendering.
    """

    view_id: str
    tip_2d_mm: tuple[float, float] | None
    axis_points_2d_mm: tuple = ()
    clipped: bool = False
    degenerate: bool = False
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "view_id": self.view_id,
            "tip_2d_mm": list(self.tip_2d_mm) if self.tip_2d_mm is not None else None,
            "axis_points_2d_mm": [list(p) for p in self.axis_points_2d_mm],
            "clipped": self.clipped,
            "degenerate": self.degenerate,
            "error": self.error,
        }


@dataclass
class NavigationSession:
    """N calibrated views plus the live tool; all views share patient_ref."""

    views: list[CalibratedView]
    active_tool: TrackedBody
    target: PlannedTrajectory | None = None
    world: TrackerSimulator | None = None
    ref_body_id: str = PATIENT_REF
    axis_samples: int = DEFAULT_AXIS_SAMPLES
    forward_extension_mm: float = DEFAULT_FORWARD_EXTENSION_MM

    def __post_init__(self):
        if not self.views:
            raise ValueError("navigation needs at least one calibrated view")
        for v in self.views:
            if v.grid_to_ref.to_frame != PATIENT_REF:
                raise ValueError(f"view {v.view_id} not anchored to {PATIENT_REF}")


def _axis_lambdas(working_length: float, samples: int, extension: float) -> np.ndarray:
    return np.concatenate(
        [[0.0], np.linspace(working_length / samples, working_length, samples), [working_length + extension]]
    )


def _render_polyline(
    view: CalibratedView,
    points_ref: np.ndarray,
    degenerate: bool,
) -> OverlaySegment:
    try:
        pts = [project(view, p) for p in points_ref]
    except (ProjectionAtInfinity, BehindSource) as exc:
        return OverlaySegment(view.view_id, None, (), error=type(exc).__name__)
    pts = np.asarray(pts)
    px = view.detector.mm_to_px(pts)
    radius = np.linalg.norm(px - np.asarray(view.dewarp.center), axis=1)
    clipped = bool(np.any(radius > view.dewarp.domain))
    return OverlaySegment(
        view.view_id,
        (float(pts[0, 0]), float(pts[0, 1])),
        tuple((float(p[0]), float(p[1])) for p in pts),
        clipped,
        degenerate,
    )


def render_overlays(session: NavigationSession, frame: TrackerFrame) -> list[OverlaySegment]:
    """One OverlaySegment per view, in session view order.

    Pure in (session, frame): identical inputs give identical overlays,
    which is what makes recorded sessions replayable.
    """
    tip, axis = tool_tip_and_axis(frame, session.active_tool, session.ref_body_id)
    geom = session.active_tool.tool_geometry
    lambdas = _axis_lambdas(geom.working_length_mm, session.axis_samples, session.forward_extension_mm)
    points_ref = tip[None, :] + lambdas[:, None] * axis.direction[None, :]
    out = []
    for view in session.views:
        source_ref = view.grid_to_ref.apply(view.source_grid_mm)
        rel = source_ref - axis.origin
        degenerate = bool(
            np.linalg.norm(rel - (rel @ axis.direction) * axis.direction) < 1e-6
        )
        out.append(_render_polyline(view, points_ref, degenerate))
    return out


def render_target_overlays(session: NavigationSession) -> list[OverlaySegment]:
    """Static overlay of the planned trajectory in each view."""
    if session.target is None:
        return []
    t = session.target
    lambdas = _axis_lambdas(t.depth_mm, session.axis_samples, 0.0)[:-1]
    points_ref = np.asarray(t.entry_mm)[None, :] + lambdas[:, None] * np.asarray(t.direction)[None, :]
    return [_render_polyline(view, points_ref, False) for view in session.views]


# ---------------------------------------------------------------------------
# Trajectory error
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryError:
    angle_deg: float
    entry_offset_mm: float
    tip_offset_at_depth_mm: float

    def to_dict(self) -> dict:
        return {
            "angle_deg": self.angle_deg,
            "entry_offset_mm": self.entry_offset_mm,
            "tip_offset_at_depth_mm": self.tip_offset_at_depth_mm,
        }


def trajectory_error(
    actual: Ray3,
    target: PlannedTrajectory,
    orientation_agnostic: bool = False,
) -> TrajectoryError:
    """Angle, entry offset, and tip offset at the planned depth.

    The actual ray is anchored at its entry point. Entry offset is the
    distance from the planned entry to the actual line; tip offset compares
    the two points reached after advancing depth_mm along each axis.
    """
    d_a = actual.direction
    d_t = np.asarray(target.direction)
    dot = float(d_a @ d_t)
    if orientation_agnostic:
        dot = abs(dot)
    angle = float(np.degrees(np.arccos(np.clip(dot, -1.0, 1.0))))
    entry = np.asarray(target.entry_mm)
    rel = entry - actual.origin
    entry_offset = float(np.linalg.norm(rel - (rel @ d_a) * d_a))
    tip_actual = actual.at(target.depth_mm)
    tip_target = entry + target.depth_mm * d_t
    tip_offset = float(np.linalg.norm(tip_actual - tip_target))
    return TrajectoryError(angle, entry_offset, tip_offset)


# ---------------------------------------------------------------------------
# Steering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SteerCommand:
    """6-DOF increment in the patient frame.

    Rotation is an axis-angle vector in degrees, applied about the current
    tool tip, after the translation. An increment followed by its negation
    restores the pose exactly.
    """

    translation_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation_deg: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def inverse(self) -> "SteerCommand":
        return SteerCommand(
            tuple(-v for v in self.translation_mm),
            tuple(-v for v in self.rotation_deg),
        )

    def to_dict(self) -> dict:
        return {
            "translation_mm": [float(v) for v in self.translation_mm],
            "rotation_deg": [float(v) for v in self.rotation_deg],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SteerCommand":
        return cls(tuple(d["translation_mm"]), tuple(d["rotation_deg"]))


@dataclass(frozen=True)
class SteerLimits:
    max_translation_mm: float = DEFAULT_MAX_STEER_TRANSLATION_MM
    max_rotation_deg: float = DEFAULT_MAX_STEER_ROTATION_DEG


@dataclass(frozen=True)
class SteerResult:
    new_pose: RigidTransform  # tool body -> tracker
    clamped: bool


def clamp_command(command: SteerCommand, limits: SteerLimits) -> tuple[SteerCommand, bool]:
    t = np.asarray(command.translation_mm, dtype=float)
    r = np.asarray(command.rotation_deg, dtype=float)
    clamped = False
    tn = np.linalg.norm(t)
    if tn > limits.max_translation_mm:
        t = t * (limits.max_translation_mm / tn)
        clamped = True
    rn = np.linalg.norm(r)
    if rn > limits.max_rotation_deg:
        r = r * (limits.max_rotation_deg / rn)
        clamped = True
    return SteerCommand(tuple(t), tuple(r)), clamped


def steer(
    session: NavigationSession,
    command: SteerCommand,
    limits: SteerLimits | None = None,
) -> SteerResult:
    """Apply a bounded increment to the true tool pose in the simulator.

    Stands in for the surgeon's hand: translation moves the tip in patient
    coordinates, rotation turns the tool about the (new) tip position.
    Out-of-bounds increments are clamped and flagged, never rejected.
    """
    if session.world is None:
        raise ValueError("session has no simulator attached")
    command, clamped = clamp_command(command, limits or SteerLimits())
    world = session.world
    tool = session.active_tool
    t_tool = world.true_pose(tool.body_id)
    if not any(command.translation_mm) and not any(command.rotation_deg):
        return SteerResult(t_tool, clamped)  # exact no-op, pose untouched
    t_ref = world.true_pose(session.ref_body_id)
    pose_ref = compose(t_ref.inverse(), t_tool)

    tip_offset = np.asarray(tool.tool_geometry.tip_offset_mm)
    tip = pose_ref.apply(tip_offset) + np.asarray(command.translation_mm)
    d_rot = rotation_vector_to_matrix(np.radians(np.asarray(command.rotation_deg)))
    rot = d_rot @ pose_ref.rotation
    new_pose_ref = RigidTransform.from_matrix(
        rot, tip - rot @ tip_offset, tool.body_id, session.ref_body_id
    )
    new_tracker_pose = compose(t_ref, new_pose_ref)
    world.set_pose(tool.body_id, new_tracker_pose)
    return SteerResult(new_tracker_pose, clamped)
