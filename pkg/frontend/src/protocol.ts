/**
 * Wire protocol types, version 1. Mirrors the service's protocol module;
 * the server side is the source of truth.
 */

export const PROTOCOL_VERSION = 1;

export type Vec2 = [number, number];
export type Vec3 = [number, number, number];

export interface OverlaySegment {
  view_id: string;
  tip_2d_mm: Vec2 | null;
  axis_points_2d_mm: Vec2[];
  clipped: boolean;
  degenerate: boolean;
  error: string | null;
}

export interface TrajectoryError {
  angle_deg: number;
  entry_offset_mm: number;
  tip_offset_at_depth_mm: number;
}

export interface Readout {
  phase: string;
  exposure_total_s: number;
  trajectory_error: TrajectoryError | null;
  grade_preview: string | null;
}

export interface OverlayPush {
  v: number;
  type: "overlay";
  session_id: string;
  seq: number;
  frame_index: number;
  timestamp_ms: number;
  overlays: OverlaySegment[];
  readout: Readout;
}

export interface ShotReport {
  view_id: string;
  label: string;
  kind: "calibration_shot" | "nav_shot";
  source_grid_mm: Vec3;
  source_residual_mm: number;
  dewarp_fit_rms_px: number;
  dewarp_domain_px: number;
  low_fiducial_warning: boolean;
  n_observations: number;
  empty_shot: boolean;
  landmarks_px: Vec2[];
  fiducials_px: Vec2[];
  target_overlay: OverlaySegment | null;
  exposure_total_s: number;
  phase: string;
}

export interface GradeReport {
  breach_mm: number;
  grade: string;
  trajectory_error: TrajectoryError;
  exposure_total_s: number;
  exposure_ratio_vs_conventional: number;
  phase: string;
  operative_time_min: { virtual: number; conventional: number; simulated: boolean };
}

export interface NavigationStarted {
  phase: string;
  view_ids: string[];
  target_overlays: OverlaySegment[];
}

export interface SessionEvent {
  seq: number;
  timestamp_ms: number;
  kind: string;
  payload: Record<string, unknown>;
}

export interface OkMessage {
  v: number;
  id: number;
  type: "ok";
  result: Record<string, unknown>;
}

export interface ErrorMessage {
  v: number;
  id: number | null;
  type: "error";
  code: string;
  message: string;
}

export type ServerMessage = OkMessage | ErrorMessage | OverlayPush;

export type RequestType =
  | "create_session"
  | "attach_reference"
  | "take_shot"
  | "start_navigation"
  | "tick"
  | "steer"
  | "insert"
  | "get_state"
  | "get_events"
  | "subscribe";

export interface SteerFields {
  translation_mm: Vec3;
  rotation_deg: Vec3;
}

export function isOverlayPush(msg: ServerMessage): msg is OverlayPush {
  return msg.type === "overlay";
}
