/**
 * The workstation facade: every user action issues exactly one protocol
 * request, and state changes only through server replies and pushes. The
 * client never invents geometry; illegal-phase actions are refused
 * locally using the last phase the service reported.
 */
import { Connection, ServiceError, WebSocketLike } from "./connection.js";
import { clampSteer } from "./controls.js";
import { WorkstationStore } from "./store.js";
import type {
  GradeReport,
  NavigationStarted,
  SessionEvent,
  ShotReport,
  SteerFields,
} from "./protocol.js";

const SHOT_PHASES = new Set(["reference_attached", "calibrated"]);

export class Workstation {
  readonly store = new WorkstationStore();
  private connection: Connection;

  constructor(private url: string, factory: (url: string) => WebSocketLike) {
    this.connection = new Connection(url, factory);
    this.connection.onPush = (push) => this.store.applyOverlay(push);
    this.connection.onStaleChange = (stale) => this.store.setStale(stale);
  }

  async connect(scene: Record<string, unknown> | "default" = "default"): Promise<void> {
    await this.connection.open();
    const result = await this.connection.request("create_session", { scene });
    this.store.sessionCreated(String(result["session_id"]), String(result["phase"]));
  }

  /** Re-open the socket and rebuild panes from the session event log. */
  async reconnect(url?: string): Promise<void> {
    if (url) this.url = url;
    await this.connection.open();
    const sid = this.sessionId();
    const result = await this.connection.request("get_events", { session_id: sid });
    this.store.resumeFromEvents(result["events"] as unknown as SessionEvent[]);
    await this.connection.request("subscribe", { session_id: sid });
  }

  private sessionId(): string {
    const sid = this.store.state.sessionId;
    if (!sid) throw new ServiceError("bad_request", "no session");
    return sid;
  }

  get phase(): string {
    return this.store.state.phase;
  }

  /** Phase gating for greying out buttons; the service still re-checks. */
  canAttach(): boolean {
    return this.phase === "setup";
  }
  canTakeShot(): boolean {
    return SHOT_PHASES.has(this.phase);
  }
  canNavigate(): boolean {
    return this.phase === "calibrated" && this.navViewCount() >= 2;
  }
  canSteer(): boolean {
    return this.phase === "navigating";
  }

  private navViewCount(): number {
    let n = 0;
    for (const pane of this.store.panes.values()) if (pane.target !== null) n += 1;
    return n;
  }

  async attachReference(): Promise<void> {
    const result = await this.connection.request("attach_reference", { session_id: this.sessionId() });
    this.store.phaseChanged(String(result["phase"]));
  }

  async takeShot(label: "AP" | "lateral"): Promise<ShotReport> {
    const result = await this.connection.request("take_shot", {
      session_id: this.sessionId(),
      label,
    });
    const report = result as unknown as ShotReport;
    this.store.applyShot(report);
    return report;
  }

  async startNavigation(): Promise<void> {
    const result = await this.connection.request("start_navigation", { session_id: this.sessionId() });
    this.store.navigationStarted(result as unknown as NavigationStarted);
  }

  async tick(frames = 1): Promise<void> {
    await this.connection.request("tick", { session_id: this.sessionId(), frames });
  }

  async steer(fields: SteerFields): Promise<boolean> {
    if (!this.canSteer()) throw new ServiceError("illegal_transition", "not navigating");
    const clamped = clampSteer(fields);
    const result = await this.connection.request("steer", {
      session_id: this.sessionId(),
      ...clamped,
    });
    return Boolean(result["clamped"]);
  }

  async insert(): Promise<GradeReport> {
    const result = await this.connection.request("insert", { session_id: this.sessionId() });
    const report = result as unknown as GradeReport;
    this.store.applyGrade(report);
    return report;
  }

  close(): void {
    this.connection.close();
  }
}
