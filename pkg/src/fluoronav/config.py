"""Numeric tolerances and simulator defaults, kept in one place."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    """Default numeric tolerances shared across the package.

    All lengths in millimeters unless the name says pixels.
    """

    rotation_orthonormality: float = 1e-9
    transform_roundtrip_mm: float = 1e-9
    unit_direction: float = 1e-12
    parallel_cross_norm: float = 1e-12
    collinearity_rel: float = 1e-9
    max_condition_number: float = 1e10
    overlay_collinearity_mm: float = 1e-6


TOL = Tolerances()

# Simulator defaults. These are desk-scale choices, configurable per scene.
DEFAULT_FRAME_RATE_HZ = 30.0
DEFAULT_MARKERS_PER_BODY = 4

DEFAULT_LOWER_ROWS = 11
DEFAULT_LOWER_COLS = 11
DEFAULT_LOWER_SPACING_MM = 10.0
DEFAULT_PIXEL_PITCH_MM = 0.44
DEFAULT_IMAGE_RADIUS_PX = 450.0
DEFAULT_DEWARP_DEGREE = 4

DEFAULT_PLATE_SEPARATION_MM = 300.0
DEFAULT_SOURCE_HEIGHT_MM = 900.0
DEFAULT_UPPER_SPACING_MM = 60.0

DEFAULT_MIN_SOURCE_FIDUCIALS = 4

DEFAULT_AXIS_SAMPLES = 5
DEFAULT_FORWARD_EXTENSION_MM = 50.0
DEFAULT_MAX_STEER_TRANSLATION_MM = 2.0
DEFAULT_MAX_STEER_ROTATION_DEG = 2.0

# Exposure protocol constants: one calibration shot plus two navigation
# shots; per-shot duration picked so the three-shot total is 3.5 s.
DEFAULT_SHOT_DURATION_S = 3.5 / 3.0
DEFAULT_CONVENTIONAL_RUN_S = 11.5
