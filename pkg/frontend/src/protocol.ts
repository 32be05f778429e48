// Line protocol shared with the telemetry service: one JSON object per line
// (or per WebSocket text frame), matching the service's record field names.

export type MessageKind = "position" | "track" | "zone_event" | "scene" | "coverage" | "diag";

export interface TelemetryMessage {
  kind: MessageKind;
  frame: number;
  wallclock_ms: number;
  payload: Record<string, unknown>;
}

export interface PositionPayload {
  tag: number;
  x: number;
  y: number;
  z: number;
  residual_rms: number;
  n_anchors: number;
  mode: string;
}

export interface TrackPayload {
  tag: number;
  x: number;
  y: number;
  z: number;
  vx: number;
  vy: number;
  vz: number;
}

export interface ZoneEventPayload {
  zone: string;
  tag: number;
  event: "latched" | "released";
}

export interface ScenePayload {
  from: string;
  to: string;
  forced: boolean;
}

export type CoverageCell = [x_idx: number, y_idx: number, anchors: number, hdop: number | null, covered: boolean];

export interface CoveragePayload {
  cell_size: number;
  nx: number;
  ny: number;
  covered_fraction: number;
  cells: CoverageCell[];
}

export interface AnchorDto {
  id: number;
  x_m: number;
  y_m: number;
  z_m: number;
  max_range_m: number;
}

export interface ZoneDto {
  id: string;
  center_x_m: number;
  center_y_m: number;
  outer_half_m: number;
  exit_half_m: number;
  dwell_frames: number;
}

export interface SceneDto {
  id: string;
  requirements: { zone: string; tag: number | "any" }[];
  next: string;
}

export interface StageDto {
  stage: { width_m: number; depth_m: number };
  anchors: AnchorDto[];
  occluders: { min: [number, number, number]; max: [number, number, number] }[];
  zones: ZoneDto[];
  scenes: SceneDto[];
}

// Snapshot sent by the service on connect, wrapped in a diag message.
export interface SnapshotPayload {
  event: "snapshot";
  source: "simulation" | "replay" | "capture";
  fps: number;
  stage: StageDto;
  scene: string;
  zone_states: Record<string, { zone: string; tag: number; event: string }>;
  tracks: { tag: number; frame: number; x: number; y: number; z: number }[];
}

export interface AckPayload {
  ack: string;
  id?: string;
  ok: boolean;
  message: string;
}

export type OperatorCommand =
  | { kind: "move_tag"; tag_id: number; x_m: number; y_m: number; id?: string }
  | { kind: "force_scene"; scene_id: string; id?: string }
  | { kind: "update_zone"; zone: Partial<ZoneDto> & { id: string }; id?: string }
  | { kind: "pause"; id?: string }
  | { kind: "resume"; id?: string }
  | { kind: "get_coverage"; cell_size?: number; hdop_max?: number; min_anchors?: number; id?: string };

export function parseMessage(line: string): TelemetryMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(line);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const msg = data as TelemetryMessage;
  if (typeof msg.kind !== "string" || typeof msg.payload !== "object") return null;
  return msg;
}

export function serializeCommand(cmd: OperatorCommand): string {
  return JSON.stringify(cmd);
}

export function isSnapshot(msg: TelemetryMessage): boolean {
  return msg.kind === "diag" && msg.payload["event"] === "snapshot";
}

export function isAck(msg: TelemetryMessage): boolean {
  return msg.kind === "diag" && typeof msg.payload["ack"] === "string";
}
