"""Monte-Carlo comparison of overlay-guided vs freehand screw insertion.

The guided arm runs the whole machine per trial: three calibration shots,
two navigated views, and a greedy controller that steers the true tool
toward the plan using only what the overlays show. The freehand arm draws
entry and angle errors directly. Both arms are graded by the same breach
geometry, and every trial owns a seeded RNG stream, so reports are
byte-identical per seed and trials can run in any order.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .calibration import triangulate
from .config import DEFAULT_CONVENTIONAL_RUN_S, DEFAULT_SHOT_DURATION_S
from .geometry import Ray3
from .imaging import (
    CALIBRATION_SHOT,
    CONTINUOUS_RUN,
    NAV_SHOT,
    ExposureEvent,
    ExposureLog,
    exposure_compare,
)
from .navigation import (
    NavigationSession,
    PlannedTrajectory,
    SteerCommand,
    render_overlays,
    steer,
    trajectory_error,
)
from .phantom import ScrewPlacement, breach_depth, grade, make_phantom
from .scene import ImagingConfig, TrackerConfig, build_world, default_scene, tool_pose_for

ARM_GUIDED = "guided"
ARM_BLIND = "blind"

_ARM_CODE = {ARM_GUIDED: 1, ARM_BLIND: 2}


@dataclass(frozen=True)
class StudyConfig:
    n_trials: int = 1000
    seed: int = 0
    guided_tracker_sigma_mm: float = 0.15
    guided_image_noise_px: float = 0.25
    blind_entry_sigma_mm: float = 0.5
    blind_angle_sigma_deg: float = 1.25
    pedicle_radius_mm: float = 4.0
    screw_radius_mm: float = 2.0
    insertion_depth_mm: float = 40.0
    shot_duration_s: float = DEFAULT_SHOT_DURATION_S
    conventional_run_s: float = DEFAULT_CONVENTIONAL_RUN_S
    max_steps: int = 200
    convergence_offset_mm: float = 0.5
    convergence_angle_deg: float = 0.5
    start_offset_sigma_mm: float = 3.0
    start_angle_sigma_deg: float = 3.0
    # Reported untouched in the study output; operative time is not simulated.
    operative_time_virtual_min: float = 11.9
    operative_time_conventional_min: float = 10.0

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")

    def to_dict(self) -> dict:
        return {
            k: getattr(self, k)
            for k in (
                "n_trials",
                "seed",
                "guided_tracker_sigma_mm",
                "guided_image_noise_px",
                "blind_entry_sigma_mm",
                "blind_angle_sigma_deg",
                "pedicle_radius_mm",
                "screw_radius_mm",
                "insertion_depth_mm",
                "shot_duration_s",
                "conventional_run_s",
                "max_steps",
            )
        }


@dataclass(frozen=True)
class TrialRecord:
    index: int
    arm: str
    side: str
    breach_mm: float
    grade: str
    final_angle_deg: float
    final_tip_offset_mm: float
    steps: int = 0
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "arm": self.arm,
            "side": self.side,
            "breach_mm": self.breach_mm,
            "grade": self.grade,
            "final_angle_deg": self.final_angle_deg,
            "final_tip_offset_mm": self.final_tip_offset_mm,
            "steps": self.steps,
            "converged": self.converged,
        }


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def one_sided_lower_p(k_low: int, n_low: int, k_high: int, n_high: int) -> float:
    """P-value for H1: first proportion is lower, pooled two-proportion z."""
    p_pool = (k_low + k_high) / (n_low + n_high)
    se = math.sqrt(p_pool * (1 - p_pool) * (1 / n_low + 1 / n_high))
    if se == 0.0:
        return 1.0
    z = (k_high / n_high - k_low / n_low) / se
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _perp_basis(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    seed = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(d, seed)
    u /= np.linalg.norm(u)
    return u, np.cross(d, u)


def _trial_seed(config: StudyConfig, index: int, arm: str) -> int:
    return int(np.random.SeedSequence([config.seed, index, _ARM_CODE[arm]]).generate_state(1)[0])


def _rotate(direction: np.ndarray, rvec_rad: np.ndarray) -> np.ndarray:
    from .geometry import rotation_vector_to_matrix

    return rotation_vector_to_matrix(rvec_rad) @ direction


def run_blind_trial(config: StudyConfig, index: int) -> tuple[TrialRecord, ExposureEvent]:
    """Freehand insertion: entry and angle errors drawn directly."""
    rng = np.random.default_rng([config.seed, index, _ARM_CODE[ARM_BLIND]])
    side = "left" if index % 2 == 0 else "right"
    phantom = make_phantom(config.pedicle_radius_mm)
    pedicle = phantom.pedicle(side)
    d = pedicle.axis.direction
    u, v = _perp_basis(d)
    e = rng.normal(scale=config.blind_entry_sigma_mm, size=2)
    entry = pedicle.axis.origin + e[0] * u + e[1] * v
    a = rng.normal(scale=np.radians(config.blind_angle_sigma_deg), size=2)
    direction = _rotate(d, a[0] * u + a[1] * v)
    placement = ScrewPlacement(Ray3(entry, direction), config.screw_radius_mm, config.insertion_depth_mm)
    breach = breach_depth(pedicle, placement)
    target = PlannedTrajectory(tuple(pedicle.axis.origin), tuple(d), config.insertion_depth_mm)
    err = trajectory_error(placement.axis, target)
    record = TrialRecord(
        index, ARM_BLIND, side, breach, grade(breach), err.angle_deg, err.tip_offset_at_depth_mm
    )
    return record, ExposureEvent(0, config.conventional_run_s, CONTINUOUS_RUN)


def run_guided_trial(config: StudyConfig, index: int) -> tuple[TrialRecord, list[ExposureEvent]]:
    """One navigated insertion driven end to end through the overlay loop."""
    side = "left" if index % 2 == 0 else "right"
    scene = default_scene(
        seed=_trial_seed(config, index, ARM_GUIDED),
        tracker=TrackerConfig(marker_sigma_mm=config.guided_tracker_sigma_mm),
        imaging=ImagingConfig(image_noise_sigma_px=config.guided_image_noise_px),
        phantom=make_phantom(config.pedicle_radius_mm).to_dict(),
        target_pedicle=side,
        insertion_depth_mm=config.insertion_depth_mm,
        screw_radius_mm=config.screw_radius_mm,
    )
    world = build_world(scene)
    pedicle = world.phantom.pedicle(side)
    target = world.target
    d = pedicle.axis.direction
    u, v = _perp_basis(d)

    rng = np.random.default_rng([config.seed, index, _ARM_CODE[ARM_GUIDED], 7])
    e = rng.normal(scale=config.start_offset_sigma_mm, size=2)
    start_tip = pedicle.axis.origin - 8.0 * d + e[0] * u + e[1] * v
    a = rng.normal(scale=np.radians(config.start_angle_sigma_deg), size=2)
    start_dir = _rotate(d, a[0] * u + a[1] * v)
    world.simulator.set_pose("tool", tool_pose_for(start_tip, start_dir, world.tool))

    shot_rng = np.random.default_rng([config.seed, index, _ARM_CODE[ARM_GUIDED], 11])
    _, cal_shot, _ = world.calibrated_shot("AP", CALIBRATION_SHOT, shot_rng)
    ap_view, ap_shot, _ = world.calibrated_shot("AP", NAV_SHOT, shot_rng)
    lat_view, lat_shot, _ = world.calibrated_shot("lateral", NAV_SHOT, shot_rng)
    events = [cal_shot.exposure_event, ap_shot.exposure_event, lat_shot.exposure_event]

    session = NavigationSession(
        [ap_view, lat_view], world.tool, target=target, world=world.simulator
    )
    entry = np.asarray(target.entry_mm)
    target_dir = np.asarray(target.direction)
    converged = False
    steps = 0
    for steps in range(1, config.max_steps + 1):
        frame = world.simulator.tick()
        overlays = render_overlays(session, frame)
        tip3d, _ = triangulate(session.views, [o.tip_2d_mm for o in overlays])
        ext3d, _ = triangulate(session.views, [o.axis_points_2d_mm[-1] for o in overlays])
        perceived_dir = ext3d - tip3d
        perceived_dir /= np.linalg.norm(perceived_dir)
        offset = entry - tip3d
        cosang = float(np.clip(perceived_dir @ target_dir, -1.0, 1.0))
        angle_deg = math.degrees(math.acos(cosang))
        if np.linalg.norm(offset) < config.convergence_offset_mm and angle_deg < config.convergence_angle_deg:
            converged = True
            break
        axis = np.cross(perceived_dir, target_dir)
        norm = np.linalg.norm(axis)
        rvec_deg = (axis / norm) * angle_deg if norm > 1e-12 else np.zeros(3)
        steer(session, SteerCommand(tuple(offset), tuple(rvec_deg)))

    actual = world.true_tool_ray()
    placement = ScrewPlacement(actual, config.screw_radius_mm, config.insertion_depth_mm)
    breach = breach_depth(pedicle, placement)
    err = trajectory_error(actual, target)
    record = TrialRecord(
        index,
        ARM_GUIDED,
        side,
        breach,
        grade(breach),
        err.angle_deg,
        err.tip_offset_at_depth_mm,
        steps,
        converged,
    )
    return record, events


@dataclass
class ArmSummary:
    arm: str
    n_trials: int
    breach_count: int
    grades: dict[str, int]
    exposure: ExposureLog
    non_converged: int = 0

    @property
    def breach_rate(self) -> float:
        return self.breach_count / self.n_trials

    def to_dict(self) -> dict:
        lo, hi = wilson_interval(self.breach_count, self.n_trials)
        return {
            "arm": self.arm,
            "n_trials": self.n_trials,
            "breach_count": self.breach_count,
            "breach_rate": self.breach_rate,
            "breach_rate_ci95": [lo, hi],
            "grades": dict(sorted(self.grades.items())),
            "exposure_total_s": self.exposure.total_s,
            "exposure_mean_per_procedure_s": self.exposure.total_s / self.n_trials,
            "non_converged": self.non_converged,
        }


@dataclass
class StudyReport:
    config: StudyConfig
    guided: ArmSummary
    blind: ArmSummary
    trials: list[TrialRecord] = field(default_factory=list)

    @property
    def exposure_ratio(self) -> float:
        per_virtual = self.guided.exposure.total_s / self.guided.n_trials
        per_conventional = self.blind.exposure.total_s / self.blind.n_trials
        return per_virtual / per_conventional

    @property
    def p_value(self) -> float:
        return one_sided_lower_p(
            self.guided.breach_count, self.guided.n_trials,
            self.blind.breach_count, self.blind.n_trials,
        )

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "arms": {"guided": self.guided.to_dict(), "blind": self.blind.to_dict()},
            "exposure_ratio": self.exposure_ratio,
            "comparison": {
                "guided_minus_blind_rate": self.guided.breach_rate - self.blind.breach_rate,
                "p_one_sided": self.p_value,
                "guided_lower_at_95": bool(self.p_value < 0.05),
            },
            "operative_time_min": {
                "virtual": self.config.operative_time_virtual_min,
                "conventional": self.config.operative_time_conventional_min,
                "simulated": False,
            },
            "trials": [t.to_dict() for t in self.trials],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def summary_rows(self) -> list[dict]:
        rows = []
        for summary in (self.guided, self.blind):
            d = summary.to_dict()
            rows.append(
                {
                    "arm": d["arm"],
                    "n_trials": d["n_trials"],
                    "breach_count": d["breach_count"],
                    "breach_rate": f"{d['breach_rate']:.4f}",
                    "ci95_lo": f"{d['breach_rate_ci95'][0]:.4f}",
                    "ci95_hi": f"{d['breach_rate_ci95'][1]:.4f}",
                    "contained": d["grades"].get("contained", 0),
                    "minor": d["grades"].get("minor", 0),
                    "major": d["grades"].get("major", 0),
                    "non_converged": d["non_converged"],
                    "exposure_mean_per_procedure_s": f"{d['exposure_mean_per_procedure_s']:.4f}",
                }
            )
        return rows


def _summarize(arm: str, records: list[TrialRecord], exposure: ExposureLog) -> ArmSummary:
    grades = {"contained": 0, "minor": 0, "major": 0}
    for r in records:
        grades[r.grade] += 1
    breaches = sum(1 for r in records if r.breach_mm > 0.0)
    non_conv = sum(1 for r in records if not r.converged)
    return ArmSummary(arm, len(records), breaches, grades, exposure, non_conv)


def run_study(config: StudyConfig) -> StudyReport:
    """Run both arms and assemble the deterministic report.

    Trials are seeded independently by (seed, index, arm), so the reduction
    order never changes the result.
    """
    guided_records: list[TrialRecord] = []
    guided_exposure = ExposureLog()
    for i in range(config.n_trials):
        record, events = run_guided_trial(config, i)
        guided_records.append(record)
        for e in events:
            guided_exposure.append(e)

    blind_records: list[TrialRecord] = []
    blind_exposure = ExposureLog()
    for i in range(config.n_trials):
        record, event = run_blind_trial(config, i)
        blind_records.append(record)
        blind_exposure.append(event)

    report = StudyReport(
        config,
        _summarize(ARM_GUIDED, guided_records, guided_exposure),
        _summarize(ARM_BLIND, blind_records, blind_exposure),
        guided_records + blind_records,
    )
    # Accounting sanity: the ratio is the protocol constants' ratio.
    exposure_compare(guided_exposure, blind_exposure)
    return report
