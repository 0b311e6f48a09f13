/**
 * Scripted operator: drives the tool onto the plan using nothing but what
 * the panes display. Rotation is aligned first (rotations pivot on the
 * tip, so they never disturb the translation cost), then the tip is walked
 * onto the target cross. Pure 2D coordinate descent: probe a step, keep it
 * if both panes improve in the worst case, undo it otherwise.
 */
import { axisAngleToTargetDeg, tipToTargetMm } from "./panes.js";
import type { SteerFields, Vec3 } from "./protocol.js";
import { Workstation } from "./workstation.js";

const AXES: Vec3[] = [
  [1, 0, 0],
  [-1, 0, 0],
  [0, 1, 0],
  [0, -1, 0],
  [0, 0, 1],
  [0, 0, -1],
];

function scaled(axis: Vec3, step: number): Vec3 {
  return [axis[0] * step, axis[1] * step, axis[2] * step];
}

function negated(f: SteerFields): SteerFields {
  const neg = (v: Vec3): Vec3 => [-v[0], -v[1], -v[2]];
  return { translation_mm: neg(f.translation_mm), rotation_deg: neg(f.rotation_deg) };
}

export interface PilotOptions {
  tipTolMm?: number;
  angleTolDeg?: number;
  maxSteers?: number;
}

export class Pilot {
  steersUsed = 0;

  constructor(private w: Workstation, private opts: PilotOptions = {}) {}

  // Descend on pane sums: the max stalls coordinate descent at corners
  // where the two panes tie, the sum does not.
  private sumTipMm(): number {
    let total = 0;
    for (const pane of this.w.store.panes.values()) {
      const d = tipToTargetMm(pane);
      if (d === null) return Number.POSITIVE_INFINITY;
      total += d;
    }
    return this.w.store.panes.size ? total : Number.POSITIVE_INFINITY;
  }

  private sumAngleDeg(): number {
    let total = 0;
    for (const pane of this.w.store.panes.values()) {
      const a = axisAngleToTargetDeg(pane);
      if (a === null) return Number.POSITIVE_INFINITY;
      total += a;
    }
    return this.w.store.panes.size ? total : Number.POSITIVE_INFINITY;
  }

  private worstTipMm(): number {
    let worst = 0;
    for (const pane of this.w.store.panes.values()) {
      worst = Math.max(worst, tipToTargetMm(pane) ?? Number.POSITIVE_INFINITY);
    }
    return this.w.store.panes.size ? worst : Number.POSITIVE_INFINITY;
  }

  private async apply(fields: SteerFields): Promise<void> {
    await this.w.steer(fields);
    await this.w.tick(1);
    this.steersUsed += 1;
  }

  private async descend(
    cost: () => number,
    command: (axis: Vec3, step: number) => SteerFields,
    startStep: number,
    minStep: number,
    tol: number,
    budget: number,
  ): Promise<boolean> {
    let step = startStep;
    while (step >= minStep && this.steersUsed < budget) {
      if (cost() <= tol) return true;
      let improved = false;
      for (const axis of AXES) {
        // March along this axis while it pays off.
        for (;;) {
          const before = cost();
          if (before <= tol) return true;
          if (this.steersUsed >= budget) return cost() <= tol;
          const fields = command(axis, step);
          await this.apply(fields);
          if (cost() < before - 1e-9) {
            improved = true;
          } else {
            await this.apply(negated(fields));
            break;
          }
        }
      }
      if (!improved) step /= 2;
    }
    return cost() <= tol;
  }

  /** Returns true once the overlay sits on the plan in every pane. */
  async alignToPlan(): Promise<boolean> {
    const tipTol = this.opts.tipTolMm ?? 0.25;
    const angleTol = this.opts.angleTolDeg ?? 0.3;
    const budget = this.opts.maxSteers ?? 1200;
    await this.w.tick(1); // populate overlays before reading costs
    const rotated = await this.descend(
      () => this.sumAngleDeg(),
      (axis, step) => ({ translation_mm: [0, 0, 0], rotation_deg: scaled(axis, step) }),
      2.0,
      0.02,
      angleTol,
      budget,
    );
    const translated = await this.descend(
      () => this.sumTipMm(),
      (axis, step) => ({ translation_mm: scaled(axis, step), rotation_deg: [0, 0, 0] }),
      2.0,
      0.01,
      tipTol,
      budget,
    );
    return rotated && translated && this.worstTipMm() <= tipTol;
  }
}
