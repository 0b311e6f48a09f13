"""Parametric vertebra phantom and screw breach grading.

Pedicle channels are cylinders around an axis line, so breach depth has a
closed form: the lateral distance from the screw axis to the channel axis
is convex along the insertion parameter, hence maximal at an end of the
insertion interval.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Ray3

CONTAINED = "contained"
MINOR = "minor"
MAJOR = "major"

MINOR_BREACH_LIMIT_MM = 2.0


def _point_line_distance(p: np.ndarray, line: Ray3) -> float:
    rel = np.asarray(p, dtype=float) - line.origin
    return float(np.linalg.norm(rel - (rel @ line.direction) * line.direction))


@dataclass(frozen=True)
class Pedicle:
    side: str
    axis: Ray3  # origin at the entry point, pointing down the channel
    radius_mm: float
    channel_length_mm: float

    def __post_init__(self):
        if self.radius_mm <= 0.0 or self.channel_length_mm <= 0.0:
            raise ValueError("pedicle radius and channel length must be > 0")

    @property
    def entry_point_mm(self) -> np.ndarray:
        return self.axis.origin

    def to_dict(self) -> dict:
        return {
            "side": self.side,
            "entry_mm": [float(v) for v in self.axis.origin],
            "direction": [float(v) for v in self.axis.direction],
            "radius_mm": self.radius_mm,
            "channel_length_mm": self.channel_length_mm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Pedicle":
        return cls(
            d["side"],
            Ray3(np.asarray(d["entry_mm"]), np.asarray(d["direction"])),
            d["radius_mm"],
            d["channel_length_mm"],
        )


@dataclass(frozen=True)
class PediclePhantom:
    pedicles: tuple[Pedicle, ...]
    landmarks_mm: np.ndarray  # display-only vertebra outline points

    def __post_init__(self):
        lm = np.asarray(self.landmarks_mm, dtype=float).reshape(-1, 3)
        lm.setflags(write=False)
        object.__setattr__(self, "landmarks_mm", lm)

    def pedicle(self, side: str) -> Pedicle:
        for p in self.pedicles:
            if p.side == side:
                return p
        raise KeyError(side)

    def to_dict(self) -> dict:
        return {
            "pedicles": [p.to_dict() for p in self.pedicles],
            "landmarks_mm": [[float(v) for v in row] for row in self.landmarks_mm],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PediclePhantom":
        return cls(
            tuple(Pedicle.from_dict(p) for p in d["pedicles"]),
            np.asarray(d["landmarks_mm"], dtype=float),
        )


def make_phantom(
    pedicle_radius_mm: float = 4.0,
    channel_length_mm: float = 45.0,
    entry_half_spacing_mm: float = 14.0,
) -> PediclePhantom:
    """Two mirrored pedicle channels plus a sketch of the vertebra outline."""
    pedicles = []
    for side, sign in (("left", -1.0), ("right", 1.0)):
        entry = np.array([sign * entry_half_spacing_mm, -20.0, 0.0])
        direction = np.array([-sign * 0.15, 1.0, 0.0])
        pedicles.append(Pedicle(side, Ray3(entry, direction), pedicle_radius_mm, channel_length_mm))
    theta = np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False)
    body = np.column_stack([22.0 * np.cos(theta), 18.0 * np.sin(theta) + 8.0, np.zeros_like(theta)])
    process = np.array([[0.0, -34.0, 0.0], [0.0, -28.0, 6.0], [0.0, -28.0, -6.0]])
    return PediclePhantom(tuple(pedicles), np.vstack([body, process]))


@dataclass(frozen=True)
class ScrewPlacement:
    axis: Ray3  # origin at the achieved entry point
    screw_radius_mm: float
    insertion_depth_mm: float

    def __post_init__(self):
        if self.screw_radius_mm <= 0.0:
            raise ValueError("screw_radius_mm must be > 0")
        if self.insertion_depth_mm <= 0.0:
            raise ValueError("insertion_depth_mm must be > 0")


def breach_depth(pedicle: Pedicle, placement: ScrewPlacement) -> float:
    """Worst cortex penetration over the insertion interval, in mm.

    max over the inserted segment of
    (distance to channel axis + screw radius - channel radius), clamped
    at zero. Convexity puts the max at an interval endpoint.
    """
    d_entry = _point_line_distance(placement.axis.origin, pedicle.axis)
    d_tip = _point_line_distance(placement.axis.at(placement.insertion_depth_mm), pedicle.axis)
    worst = max(d_entry, d_tip) + placement.screw_radius_mm - pedicle.radius_mm
    return max(0.0, worst)


def grade(breach_mm: float) -> str:
    """Containment classification with thresholds at 0 and 2 mm."""
    if breach_mm < 0.0:
        raise ValueError("breach depth cannot be negative")
    if breach_mm == 0.0:
        return CONTAINED
    if breach_mm <= MINOR_BREACH_LIMIT_MM:
        return MINOR
    return MAJOR
