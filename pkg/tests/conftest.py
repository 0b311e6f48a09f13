"""Shared builders: a desk-scale world with two orthogonal calibrated views."""
import numpy as np

from fluoronav.calibration import build_view, make_grid, pinhole_to_detector
from fluoronav.distortion import DistortionParams, GridObservation, distort, fit_dewarp_points
from fluoronav.geometry import RigidTransform, compose, rotation_vector_to_matrix
from fluoronav.navigation import NavigationSession, PlannedTrajectory
from fluoronav.tracking import NoiseModel, ToolGeometry, TrackedBody, TrackerSimulator

TRUE_SOURCE = np.array([0.0, 0.0, 900.0])

REF_MARKERS = np.array([[0.0, 0.0, 0.0], [70.0, 0.0, 0.0], [0.0, 70.0, 0.0], [0.0, 0.0, 70.0]])
TOOL_MARKERS = np.array([[0.0, 0.0, 0.0], [55.0, 0.0, 0.0], [0.0, 55.0, 0.0], [25.0, 25.0, 45.0]])

TOOL_GEOMETRY = ToolGeometry((0.0, 0.0, 150.0), (0.0, 0.0, 1.0), 100.0)

AP_GRID_POSE = RigidTransform.from_matrix(np.eye(3), [0.0, 0.0, -450.0], "grid", "tracker")
LATERAL_GRID_POSE = RigidTransform.from_matrix(
    rotation_vector_to_matrix([0.0, np.pi / 2.0, 0.0]), [-450.0, 0.0, 0.0], "grid", "tracker"
)


def rotation_between(a, b):
    """Proper rotation taking unit vector a onto unit vector b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    v = np.cross(a, b)
    c = float(a @ b)
    if np.linalg.norm(v) < 1e-12:
        if c > 0:
            return np.eye(3)
        axis = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        axis = axis - (axis @ a) * a
        return rotation_vector_to_matrix(np.pi * axis / np.linalg.norm(axis))
    angle = np.arctan2(np.linalg.norm(v), c)
    return rotation_vector_to_matrix(angle * v / np.linalg.norm(v))


def wide_grid():
    return make_grid(lower_spacing_mm=39.6)


def shot_observations(grid, grid_pose_source=TRUE_SOURCE, params=None):
    params = params or DistortionParams()
    obs = []
    for plate, fids in (("lower", grid.lower_fiducials), ("upper", grid.upper_fiducials)):
        for f in fids:
            hit = pinhole_to_detector(grid_pose_source, np.asarray(f.position_mm))
            px = grid.detector.mm_to_px(hit)
            if np.linalg.norm(px - grid.detector.principal_point_px) > grid.detector.image_radius_px:
                continue
            obs.append(GridObservation(plate, f.fiducial_id, tuple(distort(px, params)), f.position_mm))
    return obs


def calibrated_view(label, grid_pose, ref_pose=None, grid=None, params=None):
    grid = grid or wide_grid()
    ref_pose = ref_pose or RigidTransform.identity("patient_ref", "tracker")
    obs = shot_observations(grid, params=params)
    lower = [o for o in obs if o.plate == "lower"]
    model = fit_dewarp_points(
        np.array([o.image_point_px for o in lower]),
        np.array([grid.detector.mm_to_px(np.asarray(o.truth_3d_mm)[:2]) for o in lower]),
    )
    g2r = compose(ref_pose.inverse(), grid_pose)
    return build_view(label, obs, grid, g2r, model, view_id=label)


def tool_pose_for(tip, direction, ref_pose=None):
    """Tracker pose putting the tool tip at `tip` aiming along `direction`."""
    ref_pose = ref_pose or RigidTransform.identity("patient_ref", "tracker")
    R = rotation_between(np.asarray(TOOL_GEOMETRY.axis_dir), direction)
    t = np.asarray(tip, dtype=float) - R @ np.asarray(TOOL_GEOMETRY.tip_offset_mm)
    pose_ref = RigidTransform.from_matrix(R, t, "tool", "patient_ref")
    return compose(ref_pose, pose_ref)


def demo_navigation(sigma=0.0, seed=0, target=None, tool_tip=(5.0, -5.0, -30.0), tool_dir=(0.1, 0.1, 1.0)):
    """Two-view session with a live simulator, tool aimed near the origin."""
    grid = wide_grid()
    ref = TrackedBody("patient_ref", REF_MARKERS)
    tool = TrackedBody("tool", TOOL_MARKERS, TOOL_GEOMETRY)
    grid_body = grid.marker_body
    sim = TrackerSimulator([ref, tool, grid_body], NoiseModel(sigma, 0.0, seed))
    sim.set_pose("patient_ref", RigidTransform.identity("patient_ref", "tracker"))
    sim.set_pose("tool", tool_pose_for(tool_tip, tool_dir))
    views = [
        calibrated_view("AP", AP_GRID_POSE, grid=grid),
        calibrated_view("lateral", LATERAL_GRID_POSE, grid=grid),
    ]
    target = target or PlannedTrajectory((0.0, 0.0, 0.0), (0.1, 0.1, 1.0), 40.0)
    session = NavigationSession(views, tool, target=target, world=sim)
    return session, sim
