/** Terminal painter: scene model -> ANSI lines. Kept dumb on purpose. */

import type { Scene } from "./scene.js";

const COLORS: Record<string, string> = {
  red: "\x1b[31m",
  green: "\x1b[32m",
  yellow: "\x1b[33m",
  blue: "\x1b[34m",
  magenta: "\x1b[35m",
  cyan: "\x1b[36m",
  white: "\x1b[37m",
};
const RESET = "\x1b[0m";
const BOLD = "\x1b[1m";

export function paint(scene: Scene, color = true): string[] {
  const grid: string[][] = Array.from({ length: scene.rows }, () =>
    Array.from({ length: scene.cols }, () => " "),
  );
  for (const g of scene.glyphs) {
    const tint = color ? (COLORS[g.color] ?? "") : "";
    const emphas = g.manual && color ? BOLD : "";
    grid[g.row][g.col] = color ? `${emphas}${tint}${g.ch}${RESET}` : g.ch;
  }
  const lines: string[] = [];
  const header =
    `tick ${scene.tick}  t=${scene.now.toFixed(1)}s  ` +
    `intensity=${scene.intensity.toFixed(2)}` +
    (scene.paused ? "  [PAUSED]" : "") +
    (scene.stale ? "  [STALE >1s]" : "");
  lines.push(header);
  if (scene.banner) {
    lines.push(`!! ${scene.banner}`);
  }
  lines.push("+" + "-".repeat(scene.cols) + "+");
  for (const row of grid) {
    lines.push("|" + row.join("") + "|");
  }
  lines.push("+" + "-".repeat(scene.cols) + "+");
  for (const s of scene.signals) {
    lines.push(`  signal ${s}`);
  }
  for (const entry of scene.ticker) {
    lines.push(`  ${entry}`);
  }
  return lines;
}
