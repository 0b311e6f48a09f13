/**
 * Browser bootstrap: two fixed panes (AP, lateral), workflow buttons,
 * keyboard steering, and the readout strip. Serve dist/ plus index.html
 * next to a running `fluoronav serve`.
 */
import { keyToSteer } from "./controls.js";
import { Pilot } from "./pilot.js";
import { drawPane, RenderConfig } from "./render.js";
import { Workstation } from "./workstation.js";

const SERVICE_URL = (window as { FLUORONAV_URL?: string }).FLUORONAV_URL ?? "ws://127.0.0.1:8765";
const PITCH_MM_PER_PX = 0.44;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const w = new Workstation(SERVICE_URL, (url) => new WebSocket(url) as never);
  const canvases = [el<HTMLCanvasElement>("pane-ap"), el<HTMLCanvasElement>("pane-lateral")];
  const cfg: RenderConfig = { pitchMmPerPx: PITCH_MM_PER_PX, width: 512, height: 512 };
  const status = el<HTMLDivElement>("readout");

  const redraw = () => {
    const panes = [...w.store.panes.values()];
    canvases.forEach((canvas, i) => {
      const ctx = canvas.getContext("2d");
      const pane = panes[i];
      if (ctx && pane) drawPane(ctx, pane, cfg, w.store.state.staleBanner);
    });
    const s = w.store.state;
    const err = s.readout?.trajectory_error;
    status.textContent =
      `phase ${s.phase} | exposure ${s.exposureTotalS.toFixed(2)} s` +
      (err
        ? ` | angle ${err.angle_deg.toFixed(2)} deg, entry ${err.entry_offset_mm.toFixed(2)} mm,` +
          ` tip@depth ${err.tip_offset_at_depth_mm.toFixed(2)} mm | preview ${s.readout?.grade_preview}`
        : "") +
      (s.gradeReport ? ` | INSERTED: ${s.gradeReport.grade} (${s.gradeReport.breach_mm.toFixed(2)} mm)` : "");
    el<HTMLButtonElement>("attach").disabled = !w.canAttach();
    el<HTMLButtonElement>("shot-ap").disabled = !w.canTakeShot();
    el<HTMLButtonElement>("shot-lateral").disabled = !w.canTakeShot();
    el<HTMLButtonElement>("navigate").disabled = !w.canNavigate();
    el<HTMLButtonElement>("insert").disabled = !w.canSteer();
    el<HTMLButtonElement>("autopilot").disabled = !w.canSteer();
  };

  el<HTMLButtonElement>("attach").onclick = () => w.attachReference().then(redraw);
  el<HTMLButtonElement>("shot-ap").onclick = () => w.takeShot("AP").then(redraw);
  el<HTMLButtonElement>("shot-lateral").onclick = () => w.takeShot("lateral").then(redraw);
  el<HTMLButtonElement>("navigate").onclick = () =>
    w.startNavigation().then(() => w.tick(1)).then(redraw);
  el<HTMLButtonElement>("insert").onclick = () => w.insert().then(redraw);
  el<HTMLButtonElement>("autopilot").onclick = async () => {
    await new Pilot(w).alignToPlan();
    redraw();
  };

  window.addEventListener("keydown", async (event) => {
    if (!w.canSteer()) return;
    const steer = keyToSteer({ key: event.key, shiftKey: event.shiftKey });
    if (!steer) return;
    event.preventDefault();
    await w.steer(steer);
    await w.tick(1);
    redraw();
  });

  await w.connect("default");
  redraw();
  setInterval(redraw, 250); // stale-banner refresh even when idle
}

boot().catch((err) => {
  document.body.textContent = `failed to start: ${err}`;
});
