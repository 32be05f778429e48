// Test plumbing: a TCP line socket (same protocol as the WebSocket path) and
// spawn helpers that run the real telemetry service as a subprocess.

import { ChildProcess, spawn, spawnSync } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import net from "node:net";

import { LineSocketFactory } from "../src/connection.js";

export function tcpFactory(port: number, host = "127.0.0.1"): LineSocketFactory {
  return (handlers) => {
    const socket = net.createConnection({ port, host });
    let buffer = "";
    socket.on("connect", () => handlers.onOpen());
    socket.on("data", (chunk) => {
      buffer += chunk.toString("utf-8");
      let idx: number;
      while ((idx = buffer.indexOf("\n")) >= 0) {
        const line = buffer.slice(0, idx);
        buffer = buffer.slice(idx + 1);
        if (line.trim()) handlers.onLine(line);
      }
    });
    socket.on("close", () => handlers.onClose());
    socket.on("error", () => socket.destroy());
    return {
      send: (line: string) => socket.write(line + "\n"),
      close: () => socket.destroy(),
    };
  };
}

export interface ServiceHandle {
  port: number;
  proc: ChildProcess;
  stop(): void;
}

/** Start `stagetrack serve` and resolve once it reports its bound port. */
export function startService(args: string[]): Promise<ServiceHandle> {
  const proc = spawn("python3", ["-m", "stagetrack.cli", "serve", "--port", "0", ...args], {
    stdio: ["ignore", "pipe", "pipe"],
  });
  return new Promise((resolve, reject) => {
    let out = "";
    let err = "";
    const timer = setTimeout(() => {
      proc.kill();
      reject(new Error(`service did not start: ${out} ${err}`));
    }, 15000);
    proc.stdout!.on("data", (chunk) => {
      out += chunk.toString();
      const match = out.match(/serving telemetry on [\d.]+:(\d+)/);
      if (match) {
        clearTimeout(timer);
        resolve({
          port: Number(match[1]),
          proc,
          stop: () => proc.kill("SIGTERM"),
        });
      }
    });
    proc.stderr!.on("data", (chunk) => {
      err += chunk.toString();
    });
    proc.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`service exited early (${code}): ${err}`));
    });
  });
}

export interface Fixture {
  dir: string;
  stagePath: string;
  scriptPath: string;
  logPath: string;
}

const STAGE = {
  stage: { width_m: 10.42, depth_m: 10.44 },
  anchors: [
    { id: 0, x_m: 1.435, y_m: 2.37, z_m: 3.0, max_range_m: 30.0 },
    { id: 1, x_m: 8.985, y_m: 2.37, z_m: 3.0, max_range_m: 30.0 },
    { id: 2, x_m: 8.985, y_m: 8.07, z_m: 3.0, max_range_m: 30.0 },
    { id: 3, x_m: 1.435, y_m: 8.07, z_m: 3.0, max_range_m: 30.0 },
  ],
  occluders: [],
  zones: [
    { id: "z1", center_x_m: 2.0, center_y_m: 2.0, outer_half_m: 0.325, exit_half_m: 0.375, dwell_frames: 100 },
  ],
  scenes: [{ id: "opening", requirements: [{ zone: "z1", tag: "any" }], next: "end" }],
};

const SCRIPT = {
  tags: [
    {
      id: 1,
      waypoints: [
        { t: 0.0, x: 5.0, y: 5.0, z: 0.2 },
        { t: 3.0, x: 2.0, y: 2.0, z: 0.2 },
        { t: 30.0, x: 2.0, y: 2.0, z: 0.2 },
      ],
    },
  ],
};

/** Stage with a short dwell so drag tests complete quickly. */
export function dragStage(dwellFrames: number) {
  return {
    ...STAGE,
    zones: [{ ...STAGE.zones[0], dwell_frames: dwellFrames }],
    scenes: STAGE.scenes,
  };
}

export function buildFixture(): Fixture {
  const dir = mkdtempSync(join(tmpdir(), "console-e2e-"));
  const stagePath = join(dir, "stage.json");
  const scriptPath = join(dir, "script.json");
  const logPath = join(dir, "run.ndjson");
  writeFileSync(stagePath, JSON.stringify(STAGE));
  writeFileSync(scriptPath, JSON.stringify(SCRIPT));
  const result = spawnSync(
    "python3",
    [
      "-m", "stagetrack.cli", "simulate",
      stagePath, scriptPath,
      "--seed", "42", "--duration", "15", "--out", logPath,
    ],
    { encoding: "utf-8" },
  );
  if (result.status !== 0) {
    throw new Error(`simulate failed: ${result.stderr}`);
  }
  return { dir, stagePath, scriptPath, logPath };
}

export function writeStage(dir: string, name: string, stage: unknown): string {
  const path = join(dir, name);
  writeFileSync(path, JSON.stringify(stage));
  return path;
}

export function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export async function waitFor(cond: () => boolean, timeoutMs: number, what: string): Promise<void> {
  const start = Date.now();
  while (!cond()) {
    if (Date.now() - start > timeoutMs) throw new Error(`timeout waiting for ${what}`);
    await sleep(10);
  }
}
