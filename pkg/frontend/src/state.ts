// Console state, rebuilt purely from the telemetry stream: the snapshot on
// connect primes it and every later message mutates it. The console never
// invents positions, so everything here traces back to a received message.

import {
  AckPayload,
  CoveragePayload,
  ScenePayload,
  SnapshotPayload,
  StageDto,
  TelemetryMessage,
  TrackPayload,
  ZoneDto,
  ZoneEventPayload,
  isAck,
  isSnapshot,
} from "./protocol.js";

export const TRAIL_LIMIT = 150;
export const ACK_TIMEOUT_MS = 1000;

export type ConnectionStatus = "connecting" | "connected" | "lost";
export type ZoneVisualState = "idle" | "dwelling" | "latched";

export interface TrailPoint {
  x: number;
  y: number;
  frame: number;
}

export interface TagTrack {
  tag: number;
  trail: TrailPoint[];
  frame: number;
  x: number;
  y: number;
  z: number;
}

export interface SceneHistoryEntry {
  from: string;
  to: string;
  frame: number;
  forced: boolean;
}

export interface PendingCommand {
  kind: string;
  sentAt: number;
}

export class ConsoleStore {
  connection: ConnectionStatus = "connecting";
  source: string | null = null;
  fps = 30;
  stage: StageDto | null = null;
  currentScene: string | null = null;
  sceneHistory: SceneHistoryEntry[] = [];
  tracks = new Map<number, TagTrack>();
  latchedTags = new Map<string, Set<number>>();
  coverage: CoveragePayload | null = null;
  pending = new Map<string, PendingCommand>();
  acks: (AckPayload & { at: number })[] = [];
  diagLog: string[] = [];
  paused = false;

  private now: () => number;

  constructor(now: () => number = () => Date.now()) {
    this.now = now;
  }

  connectionUp(): void {
    this.connection = "connected";
  }

  connectionDown(): void {
    this.connection = "lost";
    // Stream-derived state is rebuilt from the next snapshot.
    this.tracks.clear();
    this.latchedTags.clear();
  }

  commandSent(id: string, kind: string): void {
    this.pending.set(id, { kind, sentAt: this.now() });
  }

  /** Commands that have waited past the ack deadline (service contract: 1 s). */
  overdueCommands(): string[] {
    const now = this.now();
    return [...this.pending.entries()]
      .filter(([, p]) => now - p.sentAt > ACK_TIMEOUT_MS)
      .map(([id]) => id);
  }

  apply(msg: TelemetryMessage): void {
    switch (msg.kind) {
      case "diag":
        if (isSnapshot(msg)) {
          this.applySnapshot(msg.payload as unknown as SnapshotPayload);
        } else if (isAck(msg)) {
          this.applyAck(msg.payload as unknown as AckPayload);
        } else if (typeof msg.payload["message"] === "string") {
          this.pushDiag(msg.payload["message"] as string);
        }
        break;
      case "track":
        this.applyTrack(msg.frame, msg.payload as unknown as TrackPayload);
        break;
      case "position":
        break; // raw fixes are drawn from the fused tracks only
      case "zone_event":
        this.applyZoneEvent(msg.payload as unknown as ZoneEventPayload);
        break;
      case "scene":
        this.applyScene(msg.frame, msg.payload as unknown as ScenePayload);
        break;
      case "coverage":
        this.coverage = msg.payload as unknown as CoveragePayload;
        break;
    }
  }

  private applySnapshot(snap: SnapshotPayload): void {
    this.source = snap.source;
    this.fps = snap.fps;
    this.stage = snap.stage;
    this.currentScene = snap.scene;
    this.tracks.clear();
    for (const t of snap.tracks ?? []) {
      this.tracks.set(t.tag, {
        tag: t.tag,
        trail: [{ x: t.x, y: t.y, frame: t.frame }],
        frame: t.frame,
        x: t.x,
        y: t.y,
        z: t.z,
      });
    }
    this.latchedTags.clear();
    for (const ev of Object.values(snap.zone_states ?? {})) {
      if (ev.event === "latched") {
        this.markLatched(ev.zone, ev.tag, true);
      }
    }
    this.connection = "connected";
  }

  private applyTrack(frame: number, t: TrackPayload): void {
    let track = this.tracks.get(t.tag);
    if (!track) {
      track = { tag: t.tag, trail: [], frame, x: t.x, y: t.y, z: t.z };
      this.tracks.set(t.tag, track);
    }
    track.frame = frame;
    track.x = t.x;
    track.y = t.y;
    track.z = t.z;
    track.trail.push({ x: t.x, y: t.y, frame });
    if (track.trail.length > TRAIL_LIMIT) {
      track.trail.splice(0, track.trail.length - TRAIL_LIMIT);
    }
  }

  private applyZoneEvent(ev: ZoneEventPayload): void {
    this.markLatched(ev.zone, ev.tag, ev.event === "latched");
  }

  private markLatched(zone: string, tag: number, latched: boolean): void {
    let tags = this.latchedTags.get(zone);
    if (!tags) {
      tags = new Set();
      this.latchedTags.set(zone, tags);
    }
    if (latched) tags.add(tag);
    else tags.delete(tag);
  }

  private applyScene(frame: number, scene: ScenePayload): void {
    this.currentScene = scene.to;
    this.sceneHistory.push({ from: scene.from, to: scene.to, frame, forced: scene.forced });
  }

  private applyAck(ack: AckPayload): void {
    if (ack.id) this.pending.delete(ack.id);
    this.acks.push({ ...ack, at: this.now() });
    if (!ack.ok) this.pushDiag(`${ack.ack} rejected: ${ack.message}`);
    if (ack.ok && ack.ack === "pause") this.paused = true;
    if (ack.ok && ack.ack === "resume") this.paused = false;
  }

  private pushDiag(message: string): void {
    this.diagLog.push(message);
    if (this.diagLog.length > 50) this.diagLog.shift();
  }

  /** Zone fill state: latched wins; otherwise dwelling if any tag sits inside
   * the trigger square right now; otherwise idle. */
  zoneState(zone: ZoneDto): ZoneVisualState {
    const latched = this.latchedTags.get(zone.id);
    if (latched && latched.size > 0) return "latched";
    for (const track of this.tracks.values()) {
      if (
        Math.abs(track.x - zone.center_x_m) <= zone.outer_half_m &&
        Math.abs(track.y - zone.center_y_m) <= zone.outer_half_m
      ) {
        return "dwelling";
      }
    }
    return "idle";
  }
}
