/**
 * Request/response correlation over one WebSocket, with overlay pushes
 * routed to a stream handler. Connection loss flips a stale flag that the
 * readout panel renders as a banner until a reconnect succeeds.
 */
import type { ErrorMessage, OkMessage, OverlayPush, RequestType, ServerMessage } from "./protocol.js";
import { PROTOCOL_VERSION, isOverlayPush } from "./protocol.js";

export class ServiceError extends Error {
  constructor(public code: string, message: string) {
    super(message);
  }
}

type SocketFactory = (url: string) => WebSocketLike;

/** The subset of the WebSocket API we use; satisfied by browser and ws. */
export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: "open" | "close" | "error", listener: () => void): void;
  addEventListener(type: "message", listener: (event: { data: unknown }) => void): void;
}

interface Pending {
  resolve: (result: Record<string, unknown>) => void;
  reject: (err: Error) => void;
}

export class Connection {
  private socket: WebSocketLike | null = null;
  private nextId = 1;
  private pending = new Map<number, Pending>();
  stale = true;
  onPush: ((push: OverlayPush) => void) | null = null;
  onStaleChange: ((stale: boolean) => void) | null = null;

  constructor(private url: string, private factory: SocketFactory) {}

  async open(): Promise<void> {
    const socket = this.factory(this.url);
    await new Promise<void>((resolve, reject) => {
      let settled = false;
      socket.addEventListener("open", () => {
        settled = true;
        resolve();
      });
      socket.addEventListener("error", () => {
        if (!settled) reject(new Error(`cannot connect to ${this.url}`));
      });
    });
    socket.addEventListener("message", (event) => this.handleMessage(String(event.data)));
    socket.addEventListener("close", () => this.markStale());
    socket.addEventListener("error", () => this.markStale());
    this.socket = socket;
    this.setStale(false);
  }

  private markStale(): void {
    this.setStale(true);
    for (const p of this.pending.values()) {
      p.reject(new ServiceError("connection_lost", "connection lost"));
    }
    this.pending.clear();
  }

  private setStale(stale: boolean): void {
    if (this.stale !== stale) {
      this.stale = stale;
      this.onStaleChange?.(stale);
    }
  }

  private handleMessage(raw: string): void {
    const msg = JSON.parse(raw) as ServerMessage;
    if (isOverlayPush(msg)) {
      this.onPush?.(msg);
      return;
    }
    if (msg.id === null || msg.id === undefined) return;
    const pending = this.pending.get(msg.id);
    if (!pending) return;
    this.pending.delete(msg.id);
    if (msg.type === "ok") {
      pending.resolve((msg as OkMessage).result);
    } else {
      const err = msg as ErrorMessage;
      pending.reject(new ServiceError(err.code, err.message));
    }
  }

  request(type: RequestType, fields: Record<string, unknown> = {}): Promise<Record<string, unknown>> {
    if (!this.socket || this.stale) {
      return Promise.reject(new ServiceError("connection_lost", "not connected"));
    }
    const id = this.nextId++;
    const payload = JSON.stringify({ v: PROTOCOL_VERSION, id, type, ...fields });
    return new Promise((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
      this.socket!.send(payload);
    });
  }

  close(): void {
    this.socket?.close();
    this.socket = null;
    this.setStale(true);
  }
}
