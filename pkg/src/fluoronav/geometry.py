"""Frames, rigid transforms, rays, and rigid point-set registration.

Everything downstream (tracking, calibration, navigation) trades in
millimeters and radians, right-handed frames, and named frame ids.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TOL
from .errors import (
    DegenerateGeometry,
    FrameChainError,
    InsufficientMarkers,
    ParallelRays,
)

FrameId = str

TRACKER = "tracker"
PATIENT_REF = "patient_ref"
TOOL = "tool"
GRID = "grid"


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    return a


# ---------------------------------------------------------------------------
# Quaternions, stored (w, x, y, z) with w >= 0 so serialization is stable.
# ---------------------------------------------------------------------------

def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(4)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    return q / n


def quat_canonical(q: np.ndarray) -> np.ndarray:
    q = quat_normalize(q)
    if q[0] < 0.0:
        q = -q
    return q


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion, stable for all sign cases."""
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] >= R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    return quat_canonical(q)


def rotation_vector_to_matrix(rvec: np.ndarray) -> np.ndarray:
    """Axis-angle (radians, axis*angle packed in one 3-vector) to matrix."""
    rvec = _as_vec3(rvec)
    angle = np.linalg.norm(rvec)
    if angle < 1e-300:
        return np.eye(3)
    axis = rvec / angle
    K = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


# ---------------------------------------------------------------------------
# Rigid transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RigidTransform:
    """Maps points of ``from_frame`` into ``to_frame``: p' = R p + t."""

    quaternion: np.ndarray
    translation: np.ndarray
    from_frame: FrameId
    to_frame: FrameId

    def __post_init__(self):
        q = quat_canonical(self.quaternion)
        t = _as_vec3(self.translation).copy()
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "quaternion", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls, frame: FrameId, to_frame: FrameId | None = None) -> "RigidTransform":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3), frame, to_frame or frame)

    @classmethod
    def from_matrix(cls, R: np.ndarray, t, from_frame: FrameId, to_frame: FrameId) -> "RigidTransform":
        return cls(quat_from_matrix(R), t, from_frame, to_frame)

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quaternion)

    def apply(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def apply_direction(self, d: np.ndarray) -> np.ndarray:
        return np.asarray(d, dtype=float) @ self.rotation.T

    def inverse(self) -> "RigidTransform":
        qc = quat_conjugate(self.quaternion)
        Rt = quat_to_matrix(qc)
        return RigidTransform(qc, -(Rt @ self.translation), self.to_frame, self.from_frame)

    def to_dict(self) -> dict:
        return {
            "from": self.from_frame,
            "to": self.to_frame,
            "quaternion": [float(v) for v in self.quaternion],
            "translation": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RigidTransform":
        return cls(np.array(d["quaternion"], dtype=float), np.array(d["translation"], dtype=float), d["from"], d["to"])


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Chain transforms: apply ``b`` first, then ``a`` (b.from -> a.to)."""
    if a.from_frame != b.to_frame:
        raise FrameChainError(
            f"cannot chain {b.from_frame}->{b.to_frame} into {a.from_frame}->{a.to_frame}"
        )
    q = quat_canonical(quat_mul(a.quaternion, b.quaternion))
    t = a.rotation @ b.translation + a.translation
    return RigidTransform(q, t, b.from_frame, a.to_frame)


# ---------------------------------------------------------------------------
# Rays
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ray3:
    """Origin plus unit direction; treated as an infinite line where needed."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = _as_vec3(self.origin).copy()
        d = _as_vec3(self.direction).copy()
        n = np.linalg.norm(d)
        if n < TOL.unit_direction:
            raise ValueError("ray direction must be nonzero")
        d = d / n
        o.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)

    def at(self, s: float) -> np.ndarray:
        return self.origin + s * self.direction


def closest_point_between(r1: Ray3, r2: Ray3) -> tuple[np.ndarray, float]:
    """Midpoint and length of the common perpendicular of two lines."""
    d1, d2 = r1.direction, r2.direction
    cross = np.cross(d1, d2)
    if np.linalg.norm(cross) < TOL.parallel_cross_norm:
        raise ParallelRays("ray directions are parallel")
    w0 = r1.origin - r2.origin
    b = float(d1 @ d2)
    d = float(d1 @ w0)
    e = float(d2 @ w0)
    denom = 1.0 - b * b
    s = (b * e - d) / denom
    t = (e - b * d) / denom
    p1 = r1.at(s)
    p2 = r2.at(t)
    midpoint = 0.5 * (p1 + p2)
    gap = float(np.linalg.norm(p1 - p2))
    return midpoint, gap


# ---------------------------------------------------------------------------
# Absolute orientation
# ---------------------------------------------------------------------------

def _check_not_collinear(points: np.ndarray) -> None:
    centered = points - points.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if s[0] == 0.0 or s[1] / s[0] < TOL.collinearity_rel:
        raise DegenerateGeometry("marker set is collinear")


def register_point_sets(
    model,
    observed,
    from_frame: FrameId = "model",
    to_frame: FrameId = "observed",
) -> tuple[RigidTransform, float]:
    """Closed-form least-squares rigid fit mapping model points onto observed.

    Correspondence is by index. Uses the SVD of the cross-covariance with a
    determinant sign correction, so the rotation is always proper. Returns
    the transform and the rms residual in mm.
    """
    m = np.asarray(model, dtype=float).reshape(-1, 3)
    o = np.asarray(observed, dtype=float).reshape(-1, 3)
    if m.shape != o.shape:
        raise ValueError(f"point counts differ: {m.shape[0]} vs {o.shape[0]}")
    if m.shape[0] < 3:
        raise InsufficientMarkers(f"need >=3 points, got {m.shape[0]}")
    _check_not_collinear(m)

    cm = m.mean(axis=0)
    co = o.mean(axis=0)
    H = (m - cm).T @ (o - co)
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    if d == 0.0:
        d = 1.0
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    t = co - R @ cm
    residuals = m @ R.T + t - o
    rms = float(np.sqrt(np.mean(np.sum(residuals**2, axis=1))))
    return RigidTransform.from_matrix(R, t, from_frame, to_frame), rms
