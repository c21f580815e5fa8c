/** End to end against the real Python session server: a takeover issued from
 *  this console lands in the run log, arms deduction, and shows up as manual
 *  mode in subsequent frames; the intensity slider value is reflected too. */

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { fileURLToPath } from "node:url";
import { dirname, join, resolve } from "node:path";

import { ConsoleClient } from "../src/client.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const REPO = resolve(HERE, "..", "..");
const DATA = join(REPO, "src", "twinbench", "data");

let proc: ChildProcess;
let stdoutBuf = "";
let port = 0;
let outLog = "";

describe("console to live server", () => {
  beforeAll(async () => {
    const dir = mkdtempSync(join(tmpdir(), "console-e2e-"));
    outLog = join(dir, "session.jsonl");
    // short paced session (6 s wall clock) derived from the merge scenario
    const spec = JSON.parse(
      readFileSync(join(DATA, "scenarios", "merge_adversarial.json"), "utf-8"));
    spec.duration = 6.0;
    spec.map = join(DATA, "maps", "merge.json");
    const specPath = join(dir, "session_spec.json");
    writeFileSync(specPath, JSON.stringify(spec));

    proc = spawn("python3", ["-m", "twinbench.cli", "serve",
                             "--spec", specPath, "--port", "0",
                             "--out", outLog], { cwd: REPO });
    proc.stdout!.on("data", (d) => { stdoutBuf += String(d); });
    proc.stderr!.on("data", (d) => { stdoutBuf += String(d); });
    await new Promise<void>((res, rej) => {
      const timer = setTimeout(
        () => rej(new Error("server never announced: " + stdoutBuf)), 15000);
      const probe = setInterval(() => {
        const m = stdoutBuf.match(/ws:\/\/127\.0\.0\.1:(\d+)/);
        if (m) {
          port = Number(m[1]);
          clearTimeout(timer);
          clearInterval(probe);
          res();
        }
      }, 50);
    });
  }, 30000);

  afterAll(() => {
    proc?.kill("SIGKILL");
  });

  it("drives a takeover and an intensity change through the whole stack", async () => {
    const client = new ConsoleClient();
    await client.connect(`ws://127.0.0.1:${port}`);

    const first = await client.waitForFrame(() => true, 5000);
    expect(first.entities.some((e) => e.id === "vut")).toBe(true);

    const ack = await client.sendCommand("set_intensity", { value: 0.8 });
    expect(ack.type).toBe("ack");
    const withIntensity = await client.waitForFrame(
      (f) => f.intensity === 0.8, 5000);
    expect(withIntensity.intensity).toBe(0.8);

    const tAck = await client.sendCommand("takeover", { vehicle: "vut" });
    expect(tAck.type).toBe("ack");
    const manualFrame = await client.waitForFrame(
      (f) => f.entities.some((e) => e.id === "vut" && e.control_mode === "manual"),
      5000);
    expect(manualFrame.tick).toBeGreaterThan(0);

    // a repeated takeover of the same vehicle is refused with a reason
    const again = await client.sendCommand("takeover", { vehicle: "vut" });
    expect(again.type).toBe("nack");

    client.close();

    await new Promise<void>((res) => {
      if (proc.exitCode !== null) return res();
      proc.on("exit", () => res());
    });
    expect(stdoutBuf).toMatch(/takeovers armed for deduction: 1/);

    const records = readFileSync(outLog, "utf-8").trim().split("\n")
      .map((ln) => JSON.parse(ln));
    const ticks = records.filter((r) => r.type === "tick");
    const events = ticks.flatMap((r) => r.events as Array<Record<string, unknown>>);
    const takeover = events.find((e) => e.type === "takeover");
    expect(takeover).toBeDefined();
    expect(takeover!.vehicle).toBe("vut");
    expect(events.some((e) => e.type === "set_intensity" && e.value === 0.8))
      .toBe(true);

    // manual mode persists in the logged ticks after the takeover
    const tkTick = takeover!.tick as number;
    const after = ticks.filter((t) => t.tick > tkTick + 1);
    expect(after.length).toBeGreaterThan(0);
    expect(after.every((t) => t.entities.vut.mode === "manual")).toBe(true);
  }, 60000);
});
