"""Scene document: one JSON file describing the whole simulated theatre.

Field names carry explicit units (_mm, _deg, _s, _px). Validation reports
the dotted path of the offending field. The default scene is a desk-scale
rig: source 900 mm over the detector, plates 300 mm apart, a lower lattice
wide enough to calibrate the full image disc, and a two-pedicle phantom
centred between detector and source.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .calibration import CalibrationGridGeometry, DetectorModel, make_grid
from .config import (
    DEFAULT_CONVENTIONAL_RUN_S,
    DEFAULT_FRAME_RATE_HZ,
    DEFAULT_SHOT_DURATION_S,
)
from .errors import SceneValidationError
from .geometry import RigidTransform, rotation_vector_to_matrix
from .navigation import PlannedTrajectory
from .phantom import PediclePhantom, make_phantom
from .tracking import NoiseModel, ToolGeometry, TrackedBody, TrackerSimulator

REF_MARKERS_MM = [[0.0, 0.0, 0.0], [70.0, 0.0, 0.0], [0.0, 70.0, 0.0], [0.0, 0.0, 70.0]]
TOOL_MARKERS_MM = [[0.0, 0.0, 0.0], [55.0, 0.0, 0.0], [0.0, 55.0, 0.0], [25.0, 25.0, 45.0]]


def default_c_arm_poses() -> dict[str, RigidTransform]:
    ap = RigidTransform.from_matrix(np.eye(3), [0.0, 0.0, -450.0], "grid", "tracker")
    lateral = RigidTransform.from_matrix(
        rotation_vector_to_matrix([0.0, np.pi / 2.0, 0.0]), [-450.0, 0.0, 0.0], "grid", "tracker"
    )
    return {"AP": ap, "lateral": lateral}


@dataclass(frozen=True)
class ImagingConfig:
    source_in_grid_mm: tuple[float, float, float] = (0.0, 0.0, 900.0)
    k1_per_px2: float = 1e-7
    k2_per_px4: float = 0.0
    s_rot_rad: float = 0.01
    distortion_center_px: tuple[float, float] = (0.0, 0.0)
    image_noise_sigma_px: float = 0.0
    shot_duration_s: float = DEFAULT_SHOT_DURATION_S
    dewarp_degree: int = 4


@dataclass(frozen=True)
class GridConfig:
    lower_rows: int = 11
    lower_cols: int = 11
    lower_spacing_mm: float = 39.6
    upper_rows: int = 3
    upper_cols: int = 3
    upper_spacing_mm: float = 60.0
    plate_separation_mm: float = 300.0
    pixel_pitch_mm_per_px: float = 0.44
    image_radius_px: float = 450.0
    principal_point_px: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class TrackerConfig:
    marker_sigma_mm: float = 0.0
    dropout_prob: float = 0.0
    frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ


@dataclass(frozen=True)
class ProtocolConfig:
    conventional_run_s: float = DEFAULT_CONVENTIONAL_RUN_S
    operative_time_virtual_min: float = 11.9
    operative_time_conventional_min: float = 10.0


@dataclass(frozen=True)
class SceneConfig:
    version: int = 1
    seed: int = 1234
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    imaging: ImagingConfig = field(default_factory=ImagingConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    phantom: dict = field(default_factory=lambda: make_phantom().to_dict())
    target_pedicle: str = "left"
    insertion_depth_mm: float = 40.0
    screw_radius_mm: float = 2.0
    tool_tip_offset_mm: tuple[float, float, float] = (0.0, 0.0, 150.0)
    tool_axis_dir: tuple[float, float, float] = (0.0, 0.0, 1.0)
    tool_working_length_mm: float = 100.0
    initial_tool_tip_mm: tuple[float, float, float] = (-8.0, -28.0, 6.0)
    initial_tool_dir: tuple[float, float, float] = (-0.05, 1.0, 0.1)

    def to_dict(self) -> dict:
        # JSON round trip canonicalizes tuples to lists so logged scenes
        # compare equal after file round trips.
        return json.loads(json.dumps(asdict(self)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def default_scene(**overrides) -> SceneConfig:
    return SceneConfig(**overrides)


# ---------------------------------------------------------------------------
# Validation / parsing
# ---------------------------------------------------------------------------

def _require(d: dict, key: str, kind, path: str):
    if key not in d:
        raise SceneValidationError(f"{path}.{key}", "missing required field")
    v = d[key]
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, kind):
        raise SceneValidationError(f"{path}.{key}", f"expected {kind.__name__}, got {type(v).__name__}")
    return v


def _positive(value: float, path: str) -> float:
    if value <= 0:
        raise SceneValidationError(path, "must be > 0")
    return value


def _vec(d: dict, key: str, n: int, path: str) -> tuple:
    v = _require(d, key, list, path)
    if len(v) != n or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise SceneValidationError(f"{path}.{key}", f"expected list of {n} numbers")
    return tuple(float(x) for x in v)


def scene_from_dict(doc: dict) -> SceneConfig:
    """Parse and validate a scene document, defaulting missing sections."""
    if not isinstance(doc, dict):
        raise SceneValidationError("$", "scene document must be a JSON object")
    version = doc.get("version", 1)
    if version != 1:
        raise SceneValidationError("version", f"unsupported scene version {version}")
    base = SceneConfig()
    kwargs: dict = {"version": 1, "seed": int(doc.get("seed", base.seed))}

    t = doc.get("tracker", {})
    if not isinstance(t, dict):
        raise SceneValidationError("tracker", "expected object")
    tracker = TrackerConfig(
        float(t.get("marker_sigma_mm", 0.0)),
        float(t.get("dropout_prob", 0.0)),
        float(t.get("frame_rate_hz", DEFAULT_FRAME_RATE_HZ)),
    )
    if tracker.marker_sigma_mm < 0:
        raise SceneValidationError("tracker.marker_sigma_mm", "must be >= 0")
    if not 0 <= tracker.dropout_prob < 1:
        raise SceneValidationError("tracker.dropout_prob", "must be in [0, 1)")
    _positive(tracker.frame_rate_hz, "tracker.frame_rate_hz")
    kwargs["tracker"] = tracker

    g = doc.get("grid", {})
    if not isinstance(g, dict):
        raise SceneValidationError("grid", "expected object")
    gd = GridConfig()
    grid = GridConfig(
        int(g.get("lower_rows", gd.lower_rows)),
        int(g.get("lower_cols", gd.lower_cols)),
        float(g.get("lower_spacing_mm", gd.lower_spacing_mm)),
        int(g.get("upper_rows", gd.upper_rows)),
        int(g.get("upper_cols", gd.upper_cols)),
        float(g.get("upper_spacing_mm", gd.upper_spacing_mm)),
        float(g.get("plate_separation_mm", gd.plate_separation_mm)),
        float(g.get("pixel_pitch_mm_per_px", gd.pixel_pitch_mm_per_px)),
        float(g.get("image_radius_px", gd.image_radius_px)),
        tuple(g.get("principal_point_px", gd.principal_point_px)),
    )
    _positive(grid.plate_separation_mm, "grid.plate_separation_mm")
    _positive(grid.pixel_pitch_mm_per_px, "grid.pixel_pitch_mm_per_px")
    _positive(grid.lower_spacing_mm, "grid.lower_spacing_mm")
    if grid.upper_rows * grid.upper_cols < 2:
        raise SceneValidationError("grid.upper_rows", "upper plate needs >= 2 fiducials")
    kwargs["grid"] = grid

    im = doc.get("imaging", {})
    if not isinstance(im, dict):
        raise SceneValidationError("imaging", "expected object")
    idf = ImagingConfig()
    imaging = ImagingConfig(
        _vec(im, "source_in_grid_mm", 3, "imaging") if "source_in_grid_mm" in im else idf.source_in_grid_mm,
        float(im.get("k1_per_px2", idf.k1_per_px2)),
        float(im.get("k2_per_px4", idf.k2_per_px4)),
        float(im.get("s_rot_rad", idf.s_rot_rad)),
        tuple(im.get("distortion_center_px", idf.distortion_center_px)),
        float(im.get("image_noise_sigma_px", idf.image_noise_sigma_px)),
        float(im.get("shot_duration_s", idf.shot_duration_s)),
        int(im.get("dewarp_degree", idf.dewarp_degree)),
    )
    if imaging.source_in_grid_mm[2] <= grid.plate_separation_mm:
        raise SceneValidationError("imaging.source_in_grid_mm", "source must sit beyond the upper plate")
    _positive(imaging.shot_duration_s, "imaging.shot_duration_s")
    if imaging.image_noise_sigma_px < 0:
        raise SceneValidationError("imaging.image_noise_sigma_px", "must be >= 0")
    kwargs["imaging"] = imaging

    pr = doc.get("protocol", {})
    if not isinstance(pr, dict):
        raise SceneValidationError("protocol", "expected object")
    pdf = ProtocolConfig()
    protocol = ProtocolConfig(
        float(pr.get("conventional_run_s", pdf.conventional_run_s)),
        float(pr.get("operative_time_virtual_min", pdf.operative_time_virtual_min)),
        float(pr.get("operative_time_conventional_min", pdf.operative_time_conventional_min)),
    )
    _positive(protocol.conventional_run_s, "protocol.conventional_run_s")
    kwargs["protocol"] = protocol

    if "phantom" in doc:
        try:
            phantom = PediclePhantom.from_dict(doc["phantom"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SceneValidationError("phantom", str(exc)) from None
        kwargs["phantom"] = phantom.to_dict()

    kwargs["target_pedicle"] = doc.get("target_pedicle", base.target_pedicle)
    sides = {p["side"] for p in kwargs.get("phantom", base.phantom)["pedicles"]}
    if kwargs["target_pedicle"] not in sides:
        raise SceneValidationError("target_pedicle", f"no pedicle named {kwargs['target_pedicle']!r}")

    for key in (
        "insertion_depth_mm",
        "screw_radius_mm",
        "tool_working_length_mm",
    ):
        if key in doc:
            kwargs[key] = _positive(float(doc[key]), key)
    for key in ("tool_tip_offset_mm", "tool_axis_dir", "initial_tool_tip_mm", "initial_tool_dir"):
        if key in doc:
            kwargs[key] = _vec(doc, key, 3, "$")
    return SceneConfig(**kwargs)


def load_scene(path: str | Path) -> SceneConfig:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except FileNotFoundError:
        raise SceneValidationError(str(p), "scene file not found") from None
    except json.JSONDecodeError as exc:
        raise SceneValidationError(str(p), f"invalid JSON: {exc}") from None
    return scene_from_dict(doc)


# ---------------------------------------------------------------------------
# World assembly
# ---------------------------------------------------------------------------

@dataclass
class World:
    """Everything the session state machine drives."""

    scene: SceneConfig
    grid: CalibrationGridGeometry
    phantom: PediclePhantom
    simulator: TrackerSimulator
    c_arm_poses: dict[str, RigidTransform]
    target: PlannedTrajectory
    tool: TrackedBody
    ref_body_id: str = "patient_ref"
    grid_body_id: str = "c_arm_grid"

    @property
    def distortion_params(self):
        from .distortion import DistortionParams

        im = self.scene.imaging
        return DistortionParams(
            k1=im.k1_per_px2,
            k2=im.k2_per_px4,
            s_rot=im.s_rot_rad,
            center=im.distortion_center_px,
            reference_radius=self.scene.grid.image_radius_px,
        )

    def true_tool_ray(self):
        """Tip position and axis of the tool per ground-truth poses."""
        from .geometry import Ray3, compose

        pose = compose(
            self.simulator.true_pose(self.ref_body_id).inverse(),
            self.simulator.true_pose(self.tool.body_id),
        )
        geom = self.tool.tool_geometry
        tip = pose.apply(np.asarray(geom.tip_offset_mm))
        return Ray3(tip, pose.apply_direction(np.asarray(geom.axis_dir)))

    def calibrated_shot(self, label: str, kind: str, rng: np.random.Generator, view_id: str | None = None):
        """Fire one shot with the C-arm at pose ``label`` and calibrate it.

        Physics (projection) uses true poses; the view's grid-to-patient
        transform is captured from the tracking frame at the shot instant,
        so tracker noise propagates into navigation exactly as it would in
        the theatre. The C-arm is parked at the labelled pose first.
        """
        from .calibration import build_view
        from .distortion import fit_dewarp
        from .geometry import GRID, RigidTransform, compose
        from .imaging import acquire_shot

        c_arm_pose = self.c_arm_poses[label]
        self.simulator.set_pose(self.grid_body_id, c_arm_pose)
        frame = self.simulator.tick()
        tracked = frame.pose_of(self.grid_body_id)
        # The grid marker cloud is authored in grid coordinates, so the
        # localized body pose is the grid pose under another name.
        grid_pose = RigidTransform(tracked.quaternion, tracked.translation, GRID, tracked.to_frame)
        grid_to_ref = compose(frame.pose_of(self.ref_body_id).inverse(), grid_pose)
        shot = acquire_shot(
            c_arm_pose,
            self.simulator.true_pose(self.ref_body_id),
            self.grid,
            self.phantom.landmarks_mm,
            self.scene.imaging.source_in_grid_mm,
            self.distortion_params,
            self.scene.imaging.image_noise_sigma_px,
            rng,
            timestamp_ms=frame.timestamp_ms,
            duration_s=self.scene.imaging.shot_duration_s,
            kind=kind,
        )
        detector = self.grid.detector
        model = fit_dewarp(
            shot.observations,
            lambda o: detector.mm_to_px(np.asarray(o.truth_3d_mm)[:2]),
            degree=self.scene.imaging.dewarp_degree,
        )
        view = build_view(label, shot.observations, self.grid, grid_to_ref, model, view_id=view_id)
        return view, shot, frame


def build_world(scene: SceneConfig) -> World:
    g = scene.grid
    detector = DetectorModel(g.pixel_pitch_mm_per_px, g.principal_point_px, g.image_radius_px)
    grid = make_grid(
        g.lower_rows,
        g.lower_cols,
        g.lower_spacing_mm,
        g.upper_rows,
        g.upper_cols,
        g.upper_spacing_mm,
        g.plate_separation_mm,
        detector,
    )
    phantom = PediclePhantom.from_dict(scene.phantom)
    ref = TrackedBody("patient_ref", np.asarray(REF_MARKERS_MM))
    tool = TrackedBody(
        "tool",
        np.asarray(TOOL_MARKERS_MM),
        ToolGeometry(scene.tool_tip_offset_mm, scene.tool_axis_dir, scene.tool_working_length_mm),
    )
    sim = TrackerSimulator(
        [ref, tool, grid.marker_body],
        NoiseModel(scene.tracker.marker_sigma_mm, scene.tracker.dropout_prob, scene.seed),
        scene.tracker.frame_rate_hz,
    )
    sim.set_pose("patient_ref", RigidTransform.identity("patient_ref", "tracker"))
    sim.set_pose("tool", tool_pose_for(scene.initial_tool_tip_mm, scene.initial_tool_dir, tool))

    pedicle = phantom.pedicle(scene.target_pedicle)
    target = PlannedTrajectory(
        tuple(pedicle.axis.origin), tuple(pedicle.axis.direction), scene.insertion_depth_mm
    )
    return World(scene, grid, phantom, sim, default_c_arm_poses(), target, tool)


def tool_pose_for(tip_mm, direction, tool: TrackedBody) -> RigidTransform:
    """Tracker pose placing the tool tip at a point, aimed along a direction."""
    geom = tool.tool_geometry
    a = np.asarray(geom.axis_dir, dtype=float)
    b = np.asarray(direction, dtype=float)
    b = b / np.linalg.norm(b)
    v = np.cross(a, b)
    c = float(a @ b)
    if np.linalg.norm(v) < 1e-12:
        R = np.eye(3) if c > 0 else rotation_vector_to_matrix([np.pi, 0.0, 0.0])
    else:
        angle = np.arctan2(np.linalg.norm(v), c)
        R = rotation_vector_to_matrix(angle * v / np.linalg.norm(v))
    t = np.asarray(tip_mm, dtype=float) - R @ np.asarray(geom.tip_offset_mm)
    return RigidTransform.from_matrix(R, t, tool.body_id, "tracker")
