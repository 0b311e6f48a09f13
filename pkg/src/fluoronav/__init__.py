"""Virtual-fluoroscopy navigation engine.

C-arm image dewarping, two-plate source calibration, optical tracking,
multi-view tool overlays, a replayable session service, and a Monte-Carlo
study of guided versus freehand screw insertion.
"""

from .calibration import (
    CalibratedView,
    CalibrationGridGeometry,
    DetectorModel,
    estimate_source,
    make_grid,
    project,
    triangulate,
)
from .distortion import (
    DewarpModel,
    DistortionParams,
    GridObservation,
    dewarp,
    distort,
    fit_dewarp,
)
from .geometry import (
    FrameId,
    Ray3,
    RigidTransform,
    closest_point_between,
    compose,
    register_point_sets,
)
from .imaging import ExposureEvent, ExposureLog, acquire_shot, exposure_compare
from .navigation import (
    NavigationSession,
    OverlaySegment,
    PlannedTrajectory,
    SteerCommand,
    render_overlays,
    render_target_overlays,
    steer,
    trajectory_error,
)
from .phantom import (
    Pedicle,
    PediclePhantom,
    ScrewPlacement,
    breach_depth,
    grade,
    make_phantom,
)
from .scene import SceneConfig, World, build_world, default_scene, load_scene, scene_from_dict
from .session import Phase, Session, replay, replay_file
from .study import StudyConfig, StudyReport, run_study
from .tracking import (
    NoiseModel,
    ToolGeometry,
    TrackedBody,
    TrackerFrame,
    TrackerSimulator,
    localize,
    observe,
    tool_tip_and_axis,
)

__version__ = "0.1.0"

__all__ = [
    "CalibratedView",
    "CalibrationGridGeometry",
    "DetectorModel",
    "DewarpModel",
    "DistortionParams",
    "ExposureEvent",
    "ExposureLog",
    "FrameId",
    "GridObservation",
    "NavigationSession",
    "NoiseModel",
    "OverlaySegment",
    "Pedicle",
    "PediclePhantom",
    "Phase",
    "PlannedTrajectory",
    "Ray3",
    "RigidTransform",
    "SceneConfig",
    "ScrewPlacement",
    "Session",
    "SteerCommand",
    "StudyConfig",
    "StudyReport",
    "ToolGeometry",
    "TrackedBody",
    "TrackerFrame",
    "TrackerSimulator",
    "World",
    "acquire_shot",
    "breach_depth",
    "build_world",
    "closest_point_between",
    "compose",
    "default_scene",
    "dewarp",
    "distort",
    "estimate_source",
    "exposure_compare",
    "fit_dewarp",
    "grade",
    "load_scene",
    "localize",
    "make_grid",
    "make_phantom",
    "observe",
    "project",
    "register_point_sets",
    "render_overlays",
    "render_target_overlays",
    "replay",
    "replay_file",
    "run_study",
    "scene_from_dict",
    "steer",
    "tool_tip_and_axis",
    "trajectory_error",
    "triangulate",
]
