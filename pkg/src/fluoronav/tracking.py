"""Simulated three-dimensional optical localizer.

Bodies carry passive marker clouds in their own frame; the simulator
perturbs and drops markers per frame, then pose estimation runs the same
registration the real localizer would. All randomness is derived from
(seed, frame index, body id), so replays are bit-identical.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT_FRAME_RATE_HZ
from .errors import BodyNotVisible
from .geometry import PATIENT_REF, Ray3, RigidTransform, compose, register_point_sets


@dataclass(frozen=True)
class ToolGeometry:
    """Tip and axis of a pointed instrument, in the body frame."""

    tip_offset_mm: tuple[float, float, float]
    axis_dir: tuple[float, float, float]  # insertion direction, unit
    working_length_mm: float

    def __post_init__(self):
        d = np.asarray(self.axis_dir, dtype=float)
        n = np.linalg.norm(d)
        if not np.isclose(n, 1.0, atol=1e-6):
            object.__setattr__(self, "axis_dir", tuple(d / n))


@dataclass(frozen=True)
class TrackedBody:
    body_id: str
    marker_positions_body: np.ndarray  # (n >= 3, 3) mm
    tool_geometry: ToolGeometry | None = None

    def __post_init__(self):
        m = np.asarray(self.marker_positions_body, dtype=float).reshape(-1, 3)
        if m.shape[0] < 3:
            raise ValueError(f"{self.body_id}: need >=3 markers")
        m.setflags(write=False)
        object.__setattr__(self, "marker_positions_body", m)

    @property
    def marker_count(self) -> int:
        return self.marker_positions_body.shape[0]


@dataclass(frozen=True)
class NoiseModel:
    marker_sigma_mm: float = 0.0
    dropout_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.marker_sigma_mm < 0.0:
            raise ValueError("marker_sigma_mm must be >= 0")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ValueError("dropout_prob must be in [0, 1)")


def _body_key(body_id: str) -> int:
    return zlib.crc32(body_id.encode("utf-8"))


def observe(
    body: TrackedBody,
    true_pose: RigidTransform,
    noise: NoiseModel,
    frame_index: int = 0,
) -> list:
    """Markers in tracker space with iid Gaussian noise and dropouts.

    Dropped markers come back as None so index correspondence survives.
    The RNG stream is keyed by (seed, frame, body); noise is drawn before
    dropout decisions so either magnitude alone never shifts the other.
    """
    rng = np.random.default_rng([noise.seed, frame_index, _body_key(body.body_id)])
    pts = true_pose.apply(body.marker_positions_body)
    jitter = rng.normal(scale=noise.marker_sigma_mm, size=pts.shape) if noise.marker_sigma_mm > 0 else 0.0
    dropped = rng.random(body.marker_count) < noise.dropout_prob
    pts = pts + jitter
    return [None if dropped[i] else pts[i] for i in range(body.marker_count)]


def localize(body: TrackedBody, observed: list) -> tuple[RigidTransform, float, int]:
    """Pose of the body in tracker space from its visible markers."""
    visible = [(m, o) for m, o in zip(body.marker_positions_body, observed) if o is not None]
    if len(visible) < 3:
        raise BodyNotVisible(f"{body.body_id}: {len(visible)} visible markers")
    model = np.array([v[0] for v in visible])
    obs = np.array([v[1] for v in visible])
    pose, rms = register_point_sets(model, obs, from_frame=body.body_id, to_frame="tracker")
    return pose, rms, len(visible)


@dataclass(frozen=True)
class BodyState:
    pose: RigidTransform | None
    rms_mm: float | None
    visible_marker_count: int

    def to_dict(self) -> dict:
        return {
            "pose": self.pose.to_dict() if self.pose is not None else None,
            "rms_mm": self.rms_mm,
            "visible_marker_count": self.visible_marker_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BodyState":
        pose = RigidTransform.from_dict(d["pose"]) if d["pose"] is not None else None
        return cls(pose, d["rms_mm"], d["visible_marker_count"])


@dataclass(frozen=True)
class TrackerFrame:
    index: int
    timestamp_ms: int
    bodies: dict[str, BodyState] = field(default_factory=dict)

    def state(self, body_id: str) -> BodyState:
        try:
            return self.bodies[body_id]
        except KeyError:
            raise BodyNotVisible(f"{body_id}: not tracked in this frame") from None

    def pose_of(self, body_id: str) -> RigidTransform:
        st = self.state(body_id)
        if st.pose is None:
            raise BodyNotVisible(f"{body_id}: only {st.visible_marker_count} markers visible")
        return st.pose

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "timestamp_ms": self.timestamp_ms,
            "bodies": {k: v.to_dict() for k, v in sorted(self.bodies.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrackerFrame":
        return cls(
            d["index"],
            d["timestamp_ms"],
            {k: BodyState.from_dict(v) for k, v in d["bodies"].items()},
        )


def tool_tip_and_axis(
    frame: TrackerFrame,
    tool: TrackedBody,
    ref_body_id: str = PATIENT_REF,
) -> tuple[np.ndarray, Ray3]:
    """Tool tip and axis expressed in the patient reference frame.

    Everything downstream of the localizer is patient-relative, which is
    what makes camera or table motion harmless.
    """
    if tool.tool_geometry is None:
        raise ValueError(f"{tool.body_id}: no tool geometry")
    tool_pose = frame.pose_of(tool.body_id)
    ref_pose = frame.pose_of(ref_body_id)
    body_to_ref = compose(ref_pose.inverse(), tool_pose)
    tip = body_to_ref.apply(np.asarray(tool.tool_geometry.tip_offset_mm))
    direction = body_to_ref.apply_direction(np.asarray(tool.tool_geometry.axis_dir))
    return tip, Ray3(tip, direction)


def frames_to_jsonl(frames) -> str:
    """One frame per line, for session logs and replay."""
    return "\n".join(json.dumps(f.to_dict(), sort_keys=True) for f in frames) + "\n"


def frames_from_jsonl(text: str) -> list[TrackerFrame]:
    return [TrackerFrame.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


class TrackerSimulator:
    """Single-writer frame producer with a deterministic simulated clock."""

    def __init__(
        self,
        bodies: list[TrackedBody],
        noise: NoiseModel | None = None,
        frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ,
    ):
        self.bodies = {b.body_id: b for b in bodies}
        self.noise = noise or NoiseModel()
        self.frame_rate_hz = float(frame_rate_hz)
        self.true_poses: dict[str, RigidTransform] = {
            b.body_id: RigidTransform.identity(b.body_id, "tracker") for b in bodies
        }
        self.frame_index = 0

    def set_pose(self, body_id: str, pose: RigidTransform) -> None:
        if body_id not in self.bodies:
            raise KeyError(body_id)
        self.true_poses[body_id] = pose

    def true_pose(self, body_id: str) -> RigidTransform:
        return self.true_poses[body_id]

    def frame_at(self, index: int) -> TrackerFrame:
        """Frame for a given tick of the simulated clock (pure in index)."""
        states: dict[str, BodyState] = {}
        for body_id in sorted(self.bodies):
            body = self.bodies[body_id]
            markers = observe(body, self.true_poses[body_id], self.noise, index)
            try:
                pose, rms, count = localize(body, markers)
                states[body_id] = BodyState(pose, rms, count)
            except BodyNotVisible:
                visible = sum(1 for m in markers if m is not None)
                states[body_id] = BodyState(None, None, visible)
        timestamp = round(index * 1000.0 / self.frame_rate_hz)
        return TrackerFrame(index, timestamp, states)

    def tick(self) -> TrackerFrame:
        frame = self.frame_at(self.frame_index)
        self.frame_index += 1
        return frame
