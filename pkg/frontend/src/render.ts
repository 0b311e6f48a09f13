/**
 * Canvas drawing for one view pane. Strictly presentational: points and
 * polylines arrive in detector units and only pass through the display
 * transform on their way to the screen.
 */
import { mmToPx, PaneState, toScreen } from "./panes.js";
import type { Vec2 } from "./protocol.js";

export interface RenderConfig {
  pitchMmPerPx: number;
  width: number;
  height: number;
}

export function drawPane(
  ctx: CanvasRenderingContext2D,
  pane: PaneState,
  cfg: RenderConfig,
  stale: boolean,
): void {
  ctx.clearRect(0, 0, cfg.width, cfg.height);
  ctx.fillStyle = "#0b0e12";
  ctx.fillRect(0, 0, cfg.width, cfg.height);

  const dot = (p: Vec2, radius: number, color: string) => {
    const [x, y] = toScreen(pane.transform, p);
    ctx.beginPath();
    ctx.arc(x, y, radius, 0, 2 * Math.PI);
    ctx.fillStyle = color;
    ctx.fill();
  };

  for (const f of pane.fiducialsPx) dot(f, 1.5, "#3a4450");
  for (const lm of pane.landmarksPx) dot(lm, 3, "#c8cdd2");

  const polyline = (points: Vec2[], color: string, dashed: boolean) => {
    if (points.length < 2) return;
    ctx.beginPath();
    ctx.setLineDash(dashed ? [6, 4] : []);
    points
      .map((p) => toScreen(pane.transform, mmToPx(cfg.pitchMmPerPx, p)))
      .forEach(([x, y], i) => (i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y)));
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.stroke();
    ctx.setLineDash([]);
  };

  if (pane.target) polyline(pane.target.axis_points_2d_mm, "#43a047", true);
  if (pane.overlay && !pane.overlay.error) {
    polyline(pane.overlay.axis_points_2d_mm, pane.overlay.degenerate ? "#fdd835" : "#42a5f5", false);
    if (pane.overlay.tip_2d_mm) {
      dot(mmToPx(cfg.pitchMmPerPx, pane.overlay.tip_2d_mm), 4, "#42a5f5");
    }
  }

  ctx.fillStyle = "#9aa4ad";
  ctx.font = "12px sans-serif";
  ctx.fillText(pane.label, 8, 16);
  if (pane.overlay?.error) {
    ctx.fillStyle = "#ef5350";
    ctx.fillText(`view error: ${pane.overlay.error}`, 8, 32);
  }
  if (pane.overlay?.clipped) {
    ctx.fillStyle = "#fdd835";
    ctx.fillText("overlay leaves calibrated disc", 8, 48);
  }
  if (stale) {
    ctx.fillStyle = "rgba(180, 30, 30, 0.85)";
    ctx.fillRect(0, 0, cfg.width, 24);
    ctx.fillStyle = "#fff";
    ctx.fillText("CONNECTION LOST - data may be stale", 8, 16);
  }
}
