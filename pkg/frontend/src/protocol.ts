/** Wire types for the live-session endpoint. The server is authoritative:
 *  the console renders frames verbatim and never extrapolates. */

export type ControlMode = "auto" | "manual" | "adversarial" | "scripted";

export interface EntityView {
  id: string;
  kind: string;
  x: number;
  y: number;
  heading: number;
  speed: number;
  control_mode: ControlMode;
  lane: string | null;
}

export interface SessionEvent {
  type: string;
  tick?: number;
  vehicle?: string;
  value?: number;
  reason?: string;
  [key: string]: unknown;
}

export interface StateFrame {
  type: "frame";
  tick: number;
  now: number;
  entities: EntityView[];
  signals: Record<string, Record<string, string>>;
  intensity: number;
  events: SessionEvent[];
  paused: boolean;
}

export type CommandName =
  | "takeover"
  | "release"
  | "set_intensity"
  | "pause"
  | "resume";

export interface Command {
  type: "command";
  cmd: CommandName;
  cmd_seq: number;
  vehicle?: string;
  value?: number;
}

export interface Ack {
  type: "ack";
  cmd_seq: number;
  cmd: CommandName;
}

export interface Nack {
  type: "nack";
  cmd_seq: number | null;
  cmd?: CommandName;
  reason: string;
}

export type ServerMessage = StateFrame | Ack | Nack;

export function parseServerMessage(raw: string): ServerMessage {
  const msg = JSON.parse(raw) as { type?: string };
  if (msg.type === "frame" || msg.type === "ack" || msg.type === "nack") {
    return msg as ServerMessage;
  }
  throw new Error(`unknown server message type: ${String(msg.type)}`);
}
