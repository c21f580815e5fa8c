/** Frame -> drawable scene. Pure: every pixel decision is derived from the
 *  last server frame plus the clock, so tests can assert on the model. */

import type { EntityView, SessionEvent, StateFrame } from "./protocol.js";

export interface Glyph {
  id: string;
  col: number;
  row: number;
  ch: string;
  color: string;
  manual: boolean;
  kind: string;
}

export interface Scene {
  glyphs: Glyph[];
  ticker: string[];
  stale: boolean;
  banner: string | null;
  tick: number;
  now: number;
  intensity: number;
  paused: boolean;
  signals: string[];
  cols: number;
  rows: number;
}

export interface SceneOptions {
  cols?: number;
  rows?: number;
  /** ms without a fresh frame before the stale indicator shows */
  staleAfterMs?: number;
  lastFrameAtMs?: number | null;
  nowMs?: number;
  connected?: boolean;
  maxTicker?: number;
}

const KIND_GLYPHS: Record<string, { ch: string; color: string }> = {
  physical_cav: { ch: "P", color: "cyan" },
  cloud_controlled: { ch: "C", color: "cyan" },
  hdv_twin: { ch: "H", color: "magenta" },
  virtual_cav: { ch: "V", color: "green" },
  remote_hdv: { ch: "R", color: "green" },
  background: { ch: "o", color: "white" },
  pedestrian: { ch: ".", color: "yellow" },
  rsu: { ch: "#", color: "blue" },
};

export function glyphFor(e: EntityView): { ch: string; color: string } {
  const base = KIND_GLYPHS[e.kind] ?? { ch: "?", color: "white" };
  if (e.control_mode === "manual") {
    return { ch: base.ch, color: "red" };        // operator holds this one
  }
  if (e.control_mode === "adversarial") {
    return { ch: base.ch.toLowerCase(), color: "yellow" };
  }
  return base;
}

export function worldBounds(entities: EntityView[]): {
  minX: number; minY: number; maxX: number; maxY: number;
} {
  if (entities.length === 0) {
    return { minX: -10, minY: -10, maxX: 10, maxY: 10 };
  }
  let minX = Infinity, minY = Infinity, maxX = -Infinity, maxY = -Infinity;
  for (const e of entities) {
    minX = Math.min(minX, e.x);
    minY = Math.min(minY, e.y);
    maxX = Math.max(maxX, e.x);
    maxY = Math.max(maxY, e.y);
  }
  const padX = Math.max(5, (maxX - minX) * 0.08);
  const padY = Math.max(5, (maxY - minY) * 0.08);
  return { minX: minX - padX, minY: minY - padY,
           maxX: maxX + padX, maxY: maxY + padY };
}

export function project(
  x: number, y: number,
  b: { minX: number; minY: number; maxX: number; maxY: number },
  cols: number, rows: number,
): { col: number; row: number } {
  const fx = (x - b.minX) / (b.maxX - b.minX || 1);
  const fy = (y - b.minY) / (b.maxY - b.minY || 1);
  const col = Math.min(cols - 1, Math.max(0, Math.round(fx * (cols - 1))));
  // screen rows grow downward; world y grows upward
  const row = Math.min(rows - 1, Math.max(0, Math.round((1 - fy) * (rows - 1))));
  return { col, row };
}

export function describeEvent(ev: SessionEvent): string {
  switch (ev.type) {
    case "takeover":
      return `takeover ${ev.vehicle} (${String(ev.initiator ?? "operator")})`;
    case "release":
      return `release ${ev.vehicle}`;
    case "set_intensity":
      return `intensity -> ${ev.value}`;
    case "collision":
      return `COLLISION ${String(ev.a)} x ${String(ev.b)}`;
    case "spawn":
      return `spawn ${ev.vehicle}`;
    case "despawn":
      return `despawn ${ev.vehicle}`;
    default:
      return ev.vehicle ? `${ev.type} ${ev.vehicle}` : ev.type;
  }
}

export function buildScene(
  frame: StateFrame | null,
  ticker: string[],
  opts: SceneOptions = {},
): Scene {
  const cols = opts.cols ?? 72;
  const rows = opts.rows ?? 22;
  const staleAfter = opts.staleAfterMs ?? 1000;
  const nowMs = opts.nowMs ?? Date.now();
  const connected = opts.connected ?? true;
  const last = opts.lastFrameAtMs ?? null;

  const banner = connected ? null : "connection lost, reconnecting (input disabled)";
  if (frame === null) {
    return { glyphs: [], ticker: [...ticker], stale: last !== null,
             banner: banner ?? "waiting for first frame", tick: -1, now: 0,
             intensity: 0, paused: false, signals: [], cols, rows };
  }

  const bounds = worldBounds(frame.entities);
  const glyphs: Glyph[] = frame.entities.map((e) => {
    const { col, row } = project(e.x, e.y, bounds, cols, rows);
    const style = glyphFor(e);
    return { id: e.id, col, row, ch: style.ch, color: style.color,
             manual: e.control_mode === "manual", kind: e.kind };
  });
  const stale = last !== null && nowMs - last > staleAfter;
  const signals = Object.entries(frame.signals).map(
    ([sid, phases]) =>
      `${sid}: ` + Object.entries(phases).map(([a, p]) => `${a}=${p}`).join(" "),
  );
  const maxTicker = opts.maxTicker ?? 6;
  return {
    glyphs,
    ticker: ticker.slice(-maxTicker),
    stale,
    banner,
    tick: frame.tick,
    now: frame.now,
    intensity: frame.intensity,
    paused: frame.paused,
    signals,
    cols,
    rows,
  };
}
