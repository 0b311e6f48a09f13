"""Session orchestration: the clinical workflow as a replayable state machine.

Phases move strictly Setup -> ReferenceAttached -> Calibrated -> Navigating
-> Done. Every command and every emitted artifact is appended to an
ordered event log (JSONL on disk when a path is given); re-running the
commands from a log regenerates byte-identical outputs, which is how
replay is verified.
"""
from __future__ import annotations

import json
import uuid
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import IllegalTransition, ReferenceNotAttached
from .imaging import CALIBRATION_SHOT, CONTINUOUS_RUN, NAV_SHOT, ExposureEvent, ExposureLog, exposure_compare
from .navigation import (
    NavigationSession,
    SteerCommand,
    render_overlays,
    render_target_overlays,
    steer,
    trajectory_error,
)
from .calibration import triangulate
from .geometry import Ray3
from .phantom import ScrewPlacement, breach_depth, grade
from .scene import SceneConfig, World, build_world, scene_from_dict


class Phase(str, Enum):
    SETUP = "setup"
    REFERENCE_ATTACHED = "reference_attached"
    CALIBRATED = "calibrated"
    NAVIGATING = "navigating"
    DONE = "done"


EVENT_SESSION_CREATED = "session_created"
EVENT_REFERENCE_ATTACHED = "reference_attached"
EVENT_SHOT = "shot"
EVENT_NAVIGATION_STARTED = "navigation_started"
EVENT_FRAME = "frame"
EVENT_STEER = "steer"
EVENT_REPORT = "report"

OUTPUT_EVENTS = {EVENT_SHOT, EVENT_FRAME, EVENT_REPORT}


@dataclass(frozen=True)
class EventRecord:
    seq: int
    timestamp_ms: int
    kind: str
    payload: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "timestamp_ms": self.timestamp_ms, "kind": self.kind, "payload": self.payload}

    @classmethod
    def from_dict(cls, d: dict) -> "EventRecord":
        return cls(d["seq"], d["timestamp_ms"], d["kind"], d["payload"])


class Session:
    """One procedure: scene, world, calibrated views, event log."""

    def __init__(self, scene: SceneConfig, session_id: str | None = None, log_path: str | Path | None = None):
        self.session_id = session_id or uuid.uuid4().hex[:12]
        self.scene = scene
        self.world: World = build_world(scene)
        self.phase = Phase.SETUP
        self.views = []  # all calibrated views, in shot order
        self.nav_views = []  # views usable for navigation (non-calibration shots)
        self.exposure = ExposureLog()
        self.events: list[EventRecord] = []
        self._seq = 0
        self._nav: NavigationSession | None = None
        self._shot_rng = np.random.default_rng([scene.seed, 0x5A0F])
        self._log_fh = None
        if log_path is not None:
            self._log_fh = Path(log_path).open("w", encoding="utf-8")
        self._append(
            EVENT_SESSION_CREATED,
            {"session_id": self.session_id, "scene": scene.to_dict()},
        )

    # -- event log ---------------------------------------------------------

    def _now_ms(self) -> int:
        sim = self.world.simulator
        return round(sim.frame_index * 1000.0 / sim.frame_rate_hz)

    def _append(self, kind: str, payload: dict) -> EventRecord:
        record = EventRecord(self._seq, self._now_ms(), kind, payload)
        self._seq += 1
        self.events.append(record)
        if self._log_fh is not None:
            self._log_fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
            self._log_fh.flush()
        return record

    def close(self) -> None:
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None

    def _require(self, *phases: Phase) -> None:
        if self.phase not in phases:
            raise IllegalTransition(f"{self.phase.value}: not allowed here")

    # -- workflow commands ---------------------------------------------------

    def attach_reference(self) -> dict:
        self._require(Phase.SETUP)
        self.phase = Phase.REFERENCE_ATTACHED
        self._append(EVENT_REFERENCE_ATTACHED, {"phase": self.phase.value})
        return {"phase": self.phase.value}

    def take_shot(self, label: str) -> dict:
        if self.phase == Phase.SETUP:
            raise ReferenceNotAttached("attach the patient reference before any shot")
        self._require(Phase.REFERENCE_ATTACHED, Phase.CALIBRATED)
        if label not in self.world.c_arm_poses:
            raise IllegalTransition(f"unknown C-arm pose label {label!r}")
        kind = CALIBRATION_SHOT if not self.views else NAV_SHOT
        view_id = f"{label}-{len(self.views)}"
        view, shot, frame = self.world.calibrated_shot(label, kind, self._shot_rng, view_id=view_id)
        self.views.append(view)
        if kind == NAV_SHOT:
            self.nav_views.append(view)
        self.exposure.append(shot.exposure_event)
        self.phase = Phase.CALIBRATED

        target_overlay = None
        probe = NavigationSession([view], self.world.tool, target=self.world.target)
        targets = render_target_overlays(probe)
        if targets:
            target_overlay = targets[0].to_dict()
        report = {
            "view_id": view.view_id,
            "label": label,
            "kind": kind,
            "source_grid_mm": [float(v) for v in view.source_grid_mm],
            "source_residual_mm": view.source_residual_mm,
            "dewarp_fit_rms_px": view.dewarp.fit_rms,
            "dewarp_domain_px": view.dewarp.domain,
            "low_fiducial_warning": view.low_fiducial_warning,
            "n_observations": len(shot.observations),
            "empty_shot": shot.empty_shot,
            "landmarks_px": [list(p) for p in shot.landmarks_px],
            "fiducials_px": [
                list(o.image_point_px) for o in shot.observations if o.plate == "lower"
            ],
            "target_overlay": target_overlay,
            "exposure_total_s": self.exposure.total_s,
            "phase": self.phase.value,
        }
        self._append(EVENT_SHOT, report)
        return report

    def start_navigation(self) -> dict:
        self._require(Phase.CALIBRATED)
        if len(self.nav_views) < 2:
            raise IllegalTransition(
                f"navigation needs >=2 navigation views, have {len(self.nav_views)}"
            )
        self._nav = NavigationSession(
            list(self.nav_views),
            self.world.tool,
            target=self.world.target,
            world=self.world.simulator,
        )
        self.phase = Phase.NAVIGATING
        payload = {
            "phase": self.phase.value,
            "view_ids": [v.view_id for v in self._nav.views],
            "target_overlays": [t.to_dict() for t in render_target_overlays(self._nav)],
        }
        self._append(EVENT_NAVIGATION_STARTED, payload)
        return payload

    def _perceived_ray(self, overlays) -> Ray3 | None:
        usable = [
            (v, o) for v, o in zip(self._nav.views, overlays) if o.error is None and not o.degenerate
        ]
        if len(usable) < 2:
            return None
        views = [v for v, _ in usable]
        tip3d, _ = triangulate(views, [o.tip_2d_mm for _, o in usable])
        ext3d, _ = triangulate(views, [o.axis_points_2d_mm[-1] for _, o in usable])
        direction = ext3d - tip3d
        n = np.linalg.norm(direction)
        if n < 1e-9:
            return None
        return Ray3(tip3d, direction / n)

    def _readout(self, perceived: Ray3 | None) -> dict:
        readout = {
            "phase": self.phase.value,
            "exposure_total_s": self.exposure.total_s,
            "trajectory_error": None,
            "grade_preview": None,
        }
        if perceived is not None:
            err = trajectory_error(perceived, self.world.target)
            pedicle = self.world.phantom.pedicle(self.scene.target_pedicle)
            placement = ScrewPlacement(
                perceived, self.scene.screw_radius_mm, self.scene.insertion_depth_mm
            )
            readout["trajectory_error"] = err.to_dict()
            readout["grade_preview"] = grade(breach_depth(pedicle, placement))
        return readout

    def tick(self, frames: int = 1) -> list[dict]:
        """Advance the simulated clock, emitting one overlay event per frame."""
        self._require(Phase.NAVIGATING)
        out = []
        for _ in range(frames):
            frame = self.world.simulator.tick()
            overlays = render_overlays(self._nav, frame)
            perceived = self._perceived_ray(overlays)
            payload = {
                "frame_index": frame.index,
                "timestamp_ms": frame.timestamp_ms,
                "overlays": [o.to_dict() for o in overlays],
                "readout": self._readout(perceived),
            }
            self._append(EVENT_FRAME, payload)
            out.append(payload)
        return out

    def steer(self, command: SteerCommand) -> dict:
        self._require(Phase.NAVIGATING)
        result = steer(self._nav, command)
        payload = {"command": command.to_dict(), "clamped": result.clamped}
        self._append(EVENT_STEER, payload)
        return payload

    def insert_and_grade(self) -> dict:
        self._require(Phase.NAVIGATING)
        actual = self.world.true_tool_ray()
        pedicle = self.world.phantom.pedicle(self.scene.target_pedicle)
        placement = ScrewPlacement(actual, self.scene.screw_radius_mm, self.scene.insertion_depth_mm)
        breach = breach_depth(pedicle, placement)
        err = trajectory_error(actual, self.world.target)
        conventional = ExposureLog(
            [ExposureEvent(0, self.scene.protocol.conventional_run_s, CONTINUOUS_RUN)]
        )
        report = {
            "breach_mm": breach,
            "grade": grade(breach),
            "trajectory_error": err.to_dict(),
            "exposure_total_s": self.exposure.total_s,
            "exposure_ratio_vs_conventional": exposure_compare(self.exposure, conventional),
            "operative_time_min": {
                "virtual": self.scene.protocol.operative_time_virtual_min,
                "conventional": self.scene.protocol.operative_time_conventional_min,
                "simulated": False,
            },
        }
        self.phase = Phase.DONE
        report["phase"] = self.phase.value
        self._append(EVENT_REPORT, report)
        return report

    def state(self) -> dict:
        return {
            "session_id": self.session_id,
            "phase": self.phase.value,
            "n_views": len(self.views),
            "nav_view_ids": [v.view_id for v in self.nav_views],
            "exposure_total_s": self.exposure.total_s,
            "c_arm_labels": sorted(self.world.c_arm_poses),
        }


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------

def load_event_log(path: str | Path) -> list[EventRecord]:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(EventRecord.from_dict(json.loads(line)))
    return records


@dataclass
class ReplayResult:
    session: Session
    replayed_events: list[EventRecord]
    mismatches: list[dict]

    @property
    def identical(self) -> bool:
        return not self.mismatches


def _canonical(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True)


def replay(records: list[EventRecord]) -> ReplayResult:
    """Re-execute a recorded session and diff regenerated outputs.

    Commands are replayed in log order against a fresh session built from
    the recorded scene; every output-bearing event (shots, frames, final
    report) must reproduce byte-identical payloads.
    """
    if not records or records[0].kind != EVENT_SESSION_CREATED:
        raise ValueError("log must start with a session_created event")
    scene = scene_from_dict(records[0].payload["scene"])
    session = Session(scene, session_id=records[0].payload["session_id"])
    for record in records[1:]:
        if record.kind == EVENT_REFERENCE_ATTACHED:
            session.attach_reference()
        elif record.kind == EVENT_SHOT:
            session.take_shot(record.payload["label"])
        elif record.kind == EVENT_NAVIGATION_STARTED:
            session.start_navigation()
        elif record.kind == EVENT_FRAME:
            session.tick(1)
        elif record.kind == EVENT_STEER:
            session.steer(SteerCommand.from_dict(record.payload["command"]))
        elif record.kind == EVENT_REPORT:
            session.insert_and_grade()
        else:
            raise ValueError(f"unknown event kind {record.kind!r}")

    mismatches = []
    for old, new in zip(records, session.events):
        if old.kind != new.kind or old.seq != new.seq:
            mismatches.append({"seq": old.seq, "reason": "sequence diverged"})
        elif old.kind in OUTPUT_EVENTS and _canonical(old.payload) != _canonical(new.payload):
            mismatches.append({"seq": old.seq, "reason": f"{old.kind} payload differs"})
    if len(records) != len(session.events):
        mismatches.append({"seq": len(session.events), "reason": "event count differs"})
    return ReplayResult(session, session.events, mismatches)


def replay_file(path: str | Path) -> ReplayResult:
    return replay(load_event_log(path))
