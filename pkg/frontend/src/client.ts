/** Session client. Holds no simulation truth of its own: state is whatever
 *  the last frame said, commands resolve only on the server's ack/nack. */

import WebSocket from "ws";

import {
  Ack,
  Command,
  CommandName,
  Nack,
  parseServerMessage,
  StateFrame,
} from "./protocol.js";

export interface ClientEvents {
  onFrame?: (frame: StateFrame) => void;
  onClose?: () => void;
  onError?: (err: Error) => void;
}

export class ConsoleClient {
  private ws: WebSocket | null = null;
  private seq = 0;
  private pending = new Map<number, (reply: Ack | Nack) => void>();
  events: ClientEvents;

  lastFrame: StateFrame | null = null;
  lastFrameAtMs: number | null = null;
  connected = false;
  ticker: string[] = [];

  constructor(events: ClientEvents = {}) {
    this.events = events;
  }

  connect(url: string, timeoutMs = 5000): Promise<void> {
    return new Promise((resolve, reject) => {
      const ws = new WebSocket(url);
      const timer = setTimeout(() => {
        ws.terminate();
        reject(new Error(`connect timeout after ${timeoutMs} ms`));
      }, timeoutMs);
      ws.on("open", () => {
        clearTimeout(timer);
        this.ws = ws;
        this.connected = true;
        resolve();
      });
      ws.on("message", (data) => this.handleMessage(String(data)));
      ws.on("close", () => {
        this.connected = false;
        this.failPending("connection closed");
        this.events.onClose?.();
      });
      ws.on("error", (err) => {
        clearTimeout(timer);
        this.events.onError?.(err as Error);
        if (!this.connected) reject(err);
      });
    });
  }

  private handleMessage(raw: string): void {
    const msg = parseServerMessage(raw);
    if (msg.type === "frame") {
      this.lastFrame = msg;
      this.lastFrameAtMs = Date.now();
      for (const ev of msg.events) {
        this.ticker.push(`t${msg.tick}: ${ev.type}${ev.vehicle ? " " + ev.vehicle : ""}`);
      }
      if (this.ticker.length > 50) this.ticker = this.ticker.slice(-50);
      this.events.onFrame?.(msg);
      return;
    }
    const waiter = msg.cmd_seq === null ? undefined : this.pending.get(msg.cmd_seq);
    if (waiter && msg.cmd_seq !== null) {
      this.pending.delete(msg.cmd_seq);
      waiter(msg);
    }
  }

  private failPending(reason: string): void {
    for (const [seq, waiter] of this.pending) {
      waiter({ type: "nack", cmd_seq: seq, reason });
    }
    this.pending.clear();
  }

  /** Send a command; resolves with the server's ack or nack. Never touches
   *  local state: effects become visible only through subsequent frames. */
  sendCommand(
    cmd: CommandName,
    args: { vehicle?: string; value?: number } = {},
    timeoutMs = 3000,
  ): Promise<Ack | Nack> {
    if (!this.connected || this.ws === null) {
      return Promise.resolve({
        type: "nack", cmd_seq: null, reason: "not connected",
      });
    }
    const seq = ++this.seq;
    const frame: Command = { type: "command", cmd, cmd_seq: seq, ...args };
    this.ws.send(JSON.stringify(frame));
    return new Promise((resolve) => {
      const timer = setTimeout(() => {
        this.pending.delete(seq);
        resolve({ type: "nack", cmd_seq: seq, reason: "ack timeout" });
      }, timeoutMs);
      this.pending.set(seq, (reply) => {
        clearTimeout(timer);
        resolve(reply);
      });
    });
  }

  /** Wait until a frame satisfies the predicate (or reject on timeout). */
  waitForFrame(
    pred: (frame: StateFrame) => boolean,
    timeoutMs = 5000,
  ): Promise<StateFrame> {
    if (this.lastFrame && pred(this.lastFrame)) {
      return Promise.resolve(this.lastFrame);
    }
    return new Promise((resolve, reject) => {
      const prev = this.events.onFrame;
      const timer = setTimeout(() => {
        this.events.onFrame = prev;
        reject(new Error("no matching frame before timeout"));
      }, timeoutMs);
      this.events.onFrame = (frame) => {
        prev?.(frame);
        if (pred(frame)) {
          clearTimeout(timer);
          this.events.onFrame = prev;
          resolve(frame);
        }
      };
    });
  }

  close(): void {
    this.ws?.close();
    this.ws = null;
    this.connected = false;
  }
}
