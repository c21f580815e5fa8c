/** Operator console entry point.
 *
 *   node dist/main.js --url ws://127.0.0.1:8700 [--vehicle vut]
 *
 * Keys: t takeover, r release, [ and ] adversary intensity, p pause,
 * o resume, q quit. All effects are server-acknowledged; the view only
 * changes when frames say so.
 */

import { ConsoleClient } from "./client.js";
import { buildScene } from "./scene.js";
import { paint } from "./ansi.js";

function argValue(flag: string, fallback: string): string {
  const i = process.argv.indexOf(flag);
  return i >= 0 && process.argv[i + 1] ? process.argv[i + 1] : fallback;
}

async function main(): Promise<void> {
  const url = argValue("--url", "ws://127.0.0.1:8700");
  const vehicle = argValue("--vehicle", "vut");
  const client = new ConsoleClient();
  let intensity = 0.5;
  let status = `connected to ${url}`;

  const redraw = (): void => {
    const scene = buildScene(client.lastFrame, client.ticker, {
      connected: client.connected,
      lastFrameAtMs: client.lastFrameAtMs,
      cols: Math.min(100, (process.stdout.columns ?? 80) - 4),
      rows: Math.max(12, Math.min(28, (process.stdout.rows ?? 30) - 12)),
    });
    const lines = paint(scene);
    process.stdout.write("\x1b[2J\x1b[H");
    process.stdout.write(lines.join("\n") + "\n");
    process.stdout.write(
      `\n${status}\n` +
      `keys: [t]akeover ${vehicle}  [r]elease  [ / ] intensity  ` +
      `[p]ause  [o] resume  [q]uit\n`,
    );
  };

  client.events.onFrame = (frame) => {
    intensity = frame.intensity;
    redraw();
  };
  client.events.onClose = () => {
    status = "server closed the session";
    redraw();
  };

  await client.connect(url);
  redraw();

  const send = async (
    cmd: Parameters<ConsoleClient["sendCommand"]>[0],
    args: Parameters<ConsoleClient["sendCommand"]>[1],
  ): Promise<void> => {
    const reply = await client.sendCommand(cmd, args);
    status = reply.type === "ack"
      ? `ack: ${cmd}`
      : `nack: ${cmd} (${(reply as { reason: string }).reason})`;
    redraw();
  };

  if (process.stdin.isTTY) {
    process.stdin.setRawMode(true);
  }
  process.stdin.resume();
  process.stdin.on("data", (buf) => {
    const key = buf.toString();
    if (key === "q" || key === "") {
      client.close();
      process.exit(0);
    } else if (key === "t") {
      void send("takeover", { vehicle });
    } else if (key === "r") {
      void send("release", { vehicle });
    } else if (key === "[") {
      intensity = Math.max(0, Math.round((intensity - 0.1) * 10) / 10);
      void send("set_intensity", { value: intensity });
    } else if (key === "]") {
      intensity = Math.min(1, Math.round((intensity + 0.1) * 10) / 10);
      void send("set_intensity", { value: intensity });
    } else if (key === "p") {
      void send("pause", {});
    } else if (key === "o") {
      void send("resume", {});
    }
  });
}

main().catch((err) => {
  console.error(String(err));
  process.exit(1);
});
