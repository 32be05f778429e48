// Canvas renderer: draws everything the store knows onto a 2D context.
// Takes the minimal context surface it actually uses, so tests can record
// draw calls without a real canvas.

import { ConsoleStore } from "./state.js";
import { StageTransform } from "./transform.js";

export interface Context2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  globalAlpha: number;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
}

export const ZONE_COLORS: Record<string, string> = {
  idle: "#2c3e50",
  dwelling: "#e0a030",
  latched: "#2ecc71",
};

const TAG_COLORS = ["#e74c3c", "#3498db", "#f1c40f", "#9b59b6", "#1abc9c", "#e67e22"];

export function tagColor(tag: number): string {
  return TAG_COLORS[Math.abs(tag) % TAG_COLORS.length];
}

export interface RenderOptions {
  width: number;
  height: number;
  showCoverage: boolean;
  dragGhost?: { x: number; y: number } | null;
}

export function render(ctx: Context2D, store: ConsoleStore, opts: RenderOptions): StageTransform | null {
  ctx.globalAlpha = 1;
  ctx.fillStyle = "#14181d";
  ctx.fillRect(0, 0, opts.width, opts.height);

  if (!store.stage) {
    ctx.fillStyle = "#aab";
    ctx.font = "16px sans-serif";
    ctx.fillText(
      store.connection === "lost" ? "connection lost - reconnecting" : "waiting for telemetry",
      20,
      30,
    );
    return null;
  }

  const stage = store.stage;
  const tf = new StageTransform(stage.stage.width_m, stage.stage.depth_m, opts.width, opts.height);
  const origin = tf.toCanvas(0, stage.stage.depth_m);
  const size = { w: stage.stage.width_m * tf.scale, h: stage.stage.depth_m * tf.scale };

  ctx.fillStyle = "#1d232b";
  ctx.fillRect(origin.cx, origin.cy, size.w, size.h);
  ctx.strokeStyle = "#5d6d7e";
  ctx.lineWidth = 2;
  ctx.strokeRect(origin.cx, origin.cy, size.w, size.h);

  if (opts.showCoverage && store.coverage) {
    const cov = store.coverage;
    const cell = cov.cell_size * tf.scale;
    for (const [ix, iy, , , covered] of cov.cells) {
      const corner = tf.toCanvas(ix * cov.cell_size, (iy + 1) * cov.cell_size);
      ctx.globalAlpha = 0.25;
      ctx.fillStyle = covered ? "#27ae60" : "#c0392b";
      ctx.fillRect(corner.cx, corner.cy, cell, cell);
    }
    ctx.globalAlpha = 1;
  }

  for (const occ of stage.occluders) {
    const corner = tf.toCanvas(occ.min[0], occ.max[1]);
    ctx.fillStyle = "#555d66";
    ctx.fillRect(corner.cx, corner.cy, (occ.max[0] - occ.min[0]) * tf.scale, (occ.max[1] - occ.min[1]) * tf.scale);
  }

  for (const zone of stage.zones) {
    const state = store.zoneState(zone);
    const corner = tf.toCanvas(zone.center_x_m - zone.outer_half_m, zone.center_y_m + zone.outer_half_m);
    const side = 2 * zone.outer_half_m * tf.scale;
    ctx.globalAlpha = 0.55;
    ctx.fillStyle = ZONE_COLORS[state];
    ctx.fillRect(corner.cx, corner.cy, side, side);
    ctx.globalAlpha = 1;
    ctx.strokeStyle = "#8395a7";
    ctx.lineWidth = 1;
    ctx.strokeRect(corner.cx, corner.cy, side, side);
    const label = tf.toCanvas(zone.center_x_m, zone.center_y_m);
    ctx.fillStyle = "#d5dce4";
    ctx.font = "11px sans-serif";
    ctx.fillText(zone.id, label.cx - 8, label.cy + 4);
  }

  for (const anchor of stage.anchors) {
    const p = tf.toCanvas(anchor.x_m, anchor.y_m);
    ctx.fillStyle = "#f39c12";
    ctx.fillRect(p.cx - 4, p.cy - 4, 8, 8);
    ctx.fillStyle = "#d5dce4";
    ctx.font = "10px sans-serif";
    ctx.fillText(`a${anchor.id}`, p.cx + 6, p.cy - 6);
  }

  for (const track of store.tracks.values()) {
    const color = tagColor(track.tag);
    if (track.trail.length > 1) {
      ctx.strokeStyle = color;
      ctx.lineWidth = 1;
      ctx.globalAlpha = 0.5;
      ctx.beginPath();
      const first = tf.toCanvas(track.trail[0].x, track.trail[0].y);
      ctx.moveTo(first.cx, first.cy);
      for (const pt of track.trail.slice(1)) {
        const p = tf.toCanvas(pt.x, pt.y);
        ctx.lineTo(p.cx, p.cy);
      }
      ctx.stroke();
      ctx.globalAlpha = 1;
    }
    const p = tf.toCanvas(track.x, track.y);
    ctx.fillStyle = color;
    ctx.beginPath();
    ctx.arc(p.cx, p.cy, 7, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillStyle = "#fff";
    ctx.font = "11px sans-serif";
    ctx.fillText(String(track.tag), p.cx - 3, p.cy + 4);
  }

  if (opts.dragGhost) {
    const p = tf.toCanvas(opts.dragGhost.x, opts.dragGhost.y);
    ctx.strokeStyle = "#ffffff";
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.arc(p.cx, p.cy, 9, 0, 2 * Math.PI);
    ctx.stroke();
  }

  // Scene banner and status line.
  ctx.fillStyle = "#ecf0f1";
  ctx.font = "15px sans-serif";
  const forced = store.sceneHistory.length > 0 && store.sceneHistory[store.sceneHistory.length - 1].forced;
  ctx.fillText(`scene: ${store.currentScene ?? "-"}${forced ? " (forced)" : ""}`, 12, 20);
  ctx.font = "11px sans-serif";
  ctx.fillStyle = store.connection === "connected" ? "#7f8c8d" : "#e74c3c";
  const status = store.connection === "connected"
    ? `${store.source ?? "?"} @ ${store.fps} fps${store.paused ? " (paused)" : ""}`
    : "connection lost - reconnecting";
  ctx.fillText(status, 12, opts.height - 10);

  // Scale bar, bottom right.
  const meters = tf.scaleBarMeters();
  const barLen = meters * tf.scale;
  const barY = opts.height - 14;
  ctx.strokeStyle = "#d5dce4";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(opts.width - 16 - barLen, barY);
  ctx.lineTo(opts.width - 16, barY);
  ctx.stroke();
  ctx.fillStyle = "#d5dce4";
  ctx.fillText(`${meters} m`, opts.width - 16 - barLen, barY - 6);
  return tf;
}
