/**
 * View pane state and the 2D display transform. The only geometry a pane
 * ever computes is this screen mapping; every millimeter and pixel it
 * shows arrived from the service.
 */
import type { OverlaySegment, Vec2 } from "./protocol.js";

export interface DisplayTransform {
  scale: number; // screen px per detector px
  panX: number;
  panY: number;
}

export interface PaneState {
  viewId: string;
  label: string;
  /** Shot scatter, distorted pixels as received. */
  fiducialsPx: Vec2[];
  landmarksPx: Vec2[];
  /** Planned trajectory, detector mm as received. */
  target: OverlaySegment | null;
  /** Live tool overlay, detector mm as received. */
  overlay: OverlaySegment | null;
  transform: DisplayTransform;
}

export function makePane(viewId: string, label: string): PaneState {
  return {
    viewId,
    label,
    fiducialsPx: [],
    landmarksPx: [],
    target: null,
    overlay: null,
    transform: { scale: 0.5, panX: 256, panY: 256 },
  };
}

export function toScreen(t: DisplayTransform, p: Vec2): Vec2 {
  return [p[0] * t.scale + t.panX, p[1] * t.scale + t.panY];
}

export function pan(t: DisplayTransform, dx: number, dy: number): DisplayTransform {
  return { ...t, panX: t.panX + dx, panY: t.panY + dy };
}

/** Zoom about a fixed screen point so the anchored content stays put. */
export function zoom(t: DisplayTransform, factor: number, anchor: Vec2): DisplayTransform {
  const scale = t.scale * factor;
  return {
    scale,
    panX: anchor[0] - (anchor[0] - t.panX) * factor,
    panY: anchor[1] - (anchor[1] - t.panY) * factor,
  };
}

/** Millimeter positions are drawn through the detector pixel pitch. */
export function mmToPx(pitchMmPerPx: number, p: Vec2): Vec2 {
  return [p[0] / pitchMmPerPx, p[1] / pitchMmPerPx];
}

/** Max 2D distance (detector mm) between overlay tip and target tip. */
export function tipToTargetMm(pane: PaneState): number | null {
  if (!pane.overlay?.tip_2d_mm || !pane.target?.tip_2d_mm) return null;
  const [ax, ay] = pane.overlay.tip_2d_mm;
  const [bx, by] = pane.target.tip_2d_mm;
  return Math.hypot(ax - bx, ay - by);
}

/** Angle (deg) between overlay and target polylines in this pane. */
export function axisAngleToTargetDeg(pane: PaneState): number | null {
  const dir = (seg: OverlaySegment | null): Vec2 | null => {
    if (!seg || seg.axis_points_2d_mm.length < 2) return null;
    const a = seg.axis_points_2d_mm[0]!;
    const b = seg.axis_points_2d_mm[seg.axis_points_2d_mm.length - 1]!;
    const dx = b[0] - a[0];
    const dy = b[1] - a[1];
    const n = Math.hypot(dx, dy);
    return n < 1e-12 ? null : [dx / n, dy / n];
  };
  const u = dir(pane.overlay);
  const v = dir(pane.target);
  if (!u || !v) return null;
  const dot = Math.min(1, Math.max(-1, u[0] * v[0] + u[1] * v[1]));
  return (Math.acos(Math.abs(dot)) * 180) / Math.PI;
}
