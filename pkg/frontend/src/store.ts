/**
 * Workstation state: panes, readout, phase. Fed exclusively by protocol
 * messages; stream messages are applied strictly in seq order and stale
 * or out-of-order pushes are dropped rather than reordered.
 */
import { makePane, PaneState } from "./panes.js";
import type {
  GradeReport,
  NavigationStarted,
  OverlayPush,
  Readout,
  SessionEvent,
  ShotReport,
} from "./protocol.js";

export interface WorkstationState {
  sessionId: string | null;
  phase: string;
  exposureTotalS: number;
  readout: Readout | null;
  gradeReport: GradeReport | null;
  staleBanner: boolean;
  lastSeq: number;
}

export class WorkstationStore {
  state: WorkstationState = {
    sessionId: null,
    phase: "setup",
    exposureTotalS: 0,
    readout: null,
    gradeReport: null,
    staleBanner: true,
    lastSeq: -1,
  };
  panes = new Map<string, PaneState>();

  sessionCreated(sessionId: string, phase: string): void {
    this.state.sessionId = sessionId;
    this.state.phase = phase;
  }

  phaseChanged(phase: string): void {
    this.state.phase = phase;
  }

  applyShot(report: ShotReport): void {
    const pane = makePane(report.view_id, report.label);
    pane.fiducialsPx = report.fiducials_px;
    pane.landmarksPx = report.landmarks_px;
    pane.target = report.target_overlay;
    this.panes.set(report.view_id, pane);
    this.state.phase = report.phase;
    this.state.exposureTotalS = report.exposure_total_s;
  }

  navigationStarted(result: NavigationStarted): void {
    this.state.phase = result.phase;
    // Only navigation views keep panes; the plain calibration shot drops out.
    for (const id of [...this.panes.keys()]) {
      if (!result.view_ids.includes(id)) this.panes.delete(id);
    }
    for (const target of result.target_overlays) {
      const pane = this.panes.get(target.view_id);
      if (pane) pane.target = target;
    }
  }

  applyOverlay(push: OverlayPush): boolean {
    if (push.seq <= this.state.lastSeq) return false; // never re-order the stream
    this.state.lastSeq = push.seq;
    for (const overlay of push.overlays) {
      const pane = this.panes.get(overlay.view_id);
      if (pane) pane.overlay = overlay;
    }
    this.state.readout = push.readout;
    this.state.phase = push.readout.phase;
    this.state.exposureTotalS = push.readout.exposure_total_s;
    return true;
  }

  applyGrade(report: GradeReport): void {
    this.state.gradeReport = report;
    this.state.phase = report.phase;
    this.state.exposureTotalS = report.exposure_total_s;
  }

  setStale(stale: boolean): void {
    this.state.staleBanner = stale;
  }

  /** Rebuild from a session event log, e.g. after a reconnect. */
  resumeFromEvents(events: SessionEvent[]): void {
    this.panes.clear();
    this.state.lastSeq = -1;
    this.state.gradeReport = null;
    for (const event of events) {
      if (event.kind === "session_created") {
        this.sessionCreated(String(event.payload["session_id"]), "setup");
      } else if (event.kind === "reference_attached") {
        this.phaseChanged(String(event.payload["phase"]));
      } else if (event.kind === "shot") {
        this.applyShot(event.payload as unknown as ShotReport);
      } else if (event.kind === "navigation_started") {
        this.navigationStarted(event.payload as unknown as NavigationStarted);
      } else if (event.kind === "frame") {
        const p = event.payload as Record<string, unknown>;
        this.applyOverlay({
          v: 1,
          type: "overlay",
          session_id: this.state.sessionId ?? "",
          seq: event.seq,
          frame_index: Number(p["frame_index"]),
          timestamp_ms: Number(p["timestamp_ms"]),
          overlays: p["overlays"] as OverlayPush["overlays"],
          readout: p["readout"] as Readout,
        });
      } else if (event.kind === "report") {
        this.applyGrade(event.payload as unknown as GradeReport);
      }
    }
  }

  /** True once both panes show the tool tip on the target cross. */
  allPanesAligned(tolMm: number): boolean {
    if (this.panes.size === 0) return false;
    for (const pane of this.panes.values()) {
      if (!pane.overlay?.tip_2d_mm || !pane.target?.tip_2d_mm) return false;
      const [ax, ay] = pane.overlay.tip_2d_mm;
      const [bx, by] = pane.target.tip_2d_mm;
      if (Math.hypot(ax - bx, ay - by) > tolMm) return false;
    }
    return true;
  }
}
