/**
 * Keyboard steering: arrows/PageUp/PageDown translate, the same keys with
 * Shift rotate. Increments mirror the service clamp (2 mm / 2 deg per
 * tick); the server clamps anyway, this just keeps the UI honest.
 */
import type { SteerFields, Vec3 } from "./protocol.js";

export const STEP_MM = 1.0;
export const STEP_DEG = 1.0;
export const MAX_STEP_MM = 2.0;
export const MAX_STEP_DEG = 2.0;

const TRANSLATE: Record<string, Vec3> = {
  ArrowLeft: [-STEP_MM, 0, 0],
  ArrowRight: [STEP_MM, 0, 0],
  ArrowUp: [0, STEP_MM, 0],
  ArrowDown: [0, -STEP_MM, 0],
  PageUp: [0, 0, STEP_MM],
  PageDown: [0, 0, -STEP_MM],
};

const ROTATE: Record<string, Vec3> = {
  ArrowLeft: [0, 0, STEP_DEG],
  ArrowRight: [0, 0, -STEP_DEG],
  ArrowUp: [STEP_DEG, 0, 0],
  ArrowDown: [-STEP_DEG, 0, 0],
  PageUp: [0, STEP_DEG, 0],
  PageDown: [0, -STEP_DEG, 0],
};

export interface KeyInput {
  key: string;
  shiftKey: boolean;
}

/** One key press -> at most one steer command; unknown keys map to null. */
export function keyToSteer(input: KeyInput): SteerFields | null {
  const table = input.shiftKey ? ROTATE : TRANSLATE;
  const vec = table[input.key];
  if (!vec) return null;
  return input.shiftKey
    ? { translation_mm: [0, 0, 0], rotation_deg: vec }
    : { translation_mm: vec, rotation_deg: [0, 0, 0] };
}

export function clampSteer(fields: SteerFields): SteerFields {
  const clip = (v: Vec3, max: number): Vec3 => {
    const n = Math.hypot(v[0], v[1], v[2]);
    if (n <= max || n === 0) return v;
    const k = max / n;
    return [v[0] * k, v[1] * k, v[2] * k];
  };
  return {
    translation_mm: clip(fields.translation_mm, MAX_STEP_MM),
    rotation_deg: clip(fields.rotation_deg, MAX_STEP_DEG),
  };
}
