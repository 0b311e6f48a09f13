/**
 * Headless demo for `npm start`: runs the whole scripted procedure against
 * a live service and prints what the readout strip would show.
 */
import WebSocket from "ws";

import { Pilot } from "./pilot.js";
import { Workstation } from "./workstation.js";
import type { WebSocketLike } from "./connection.js";

const url = process.env.FLUORONAV_URL ?? "ws://127.0.0.1:8765";

async function main(): Promise<void> {
  const w = new Workstation(url, (u) => new WebSocket(u) as unknown as WebSocketLike);
  await w.connect("default");
  console.log(`session ${w.store.state.sessionId} phase=${w.phase}`);
  await w.attachReference();
  for (const label of ["AP", "AP", "lateral"] as const) {
    const shot = await w.takeShot(label);
    console.log(
      `shot ${shot.view_id}: ${shot.kind}, dewarp rms ${shot.dewarp_fit_rms_px.toExponential(2)} px, ` +
        `source residual ${shot.source_residual_mm.toExponential(2)} mm`,
    );
  }
  await w.startNavigation();
  const pilot = new Pilot(w);
  const aligned = await pilot.alignToPlan();
  console.log(`aligned=${aligned} after ${pilot.steersUsed} steering ticks`);
  const report = await w.insert();
  console.log(
    `inserted: grade=${report.grade}, breach=${report.breach_mm.toFixed(3)} mm, ` +
      `exposure=${report.exposure_total_s.toFixed(2)} s ` +
      `(ratio ${report.exposure_ratio_vs_conventional.toFixed(3)} vs conventional)`,
  );
  w.close();
}

main().catch((err) => {
  console.error(err);
  process.exit(1);
});
