// Operator console core: one message queue in, one render loop out, commands
// fired back over the same connection. DOM-free so it can run under tests;
// main.ts binds it to a real canvas and buttons.

import { Connection, LineSocketFactory } from "./connection.js";
import {
  OperatorCommand,
  TelemetryMessage,
  parseMessage,
  serializeCommand,
} from "./protocol.js";
import { ConsoleStore } from "./state.js";
import { Context2D, RenderOptions, render } from "./render.js";
import { StageTransform } from "./transform.js";

export interface ConsoleOptions {
  width: number;
  height: number;
  now?: () => number;
  schedule?: (cb: () => void) => void;
  onRender?: (store: ConsoleStore) => void;
  onMessage?: (msg: TelemetryMessage) => void;
}

const FRAME_MS = 33; // ~30 fps target; comfortably above the 10 fps contract

export class OperatorConsole {
  readonly store: ConsoleStore;
  renderCount = 0;
  private connection: Connection;
  private ctx: Context2D;
  private opts: ConsoleOptions;
  private running = false;
  private commandSeq = 0;
  private transform: StageTransform | null = null;
  private drag: { tag: number; x: number; y: number } | null = null;
  private showCoverage = false;
  private schedule: (cb: () => void) => void;

  constructor(ctx: Context2D, factory: LineSocketFactory, opts: ConsoleOptions) {
    this.ctx = ctx;
    this.opts = opts;
    this.store = new ConsoleStore(opts.now);
    this.schedule =
      opts.schedule ??
      (typeof requestAnimationFrame === "function"
        ? (cb) => requestAnimationFrame(() => cb())
        : (cb) => setTimeout(cb, FRAME_MS));
    this.connection = new Connection(factory, {
      onOpen: () => this.store.connectionUp(),
      onClose: () => this.store.connectionDown(),
      onLine: (line) => {
        const msg = parseMessage(line);
        if (msg) {
          this.store.apply(msg);
          this.opts.onMessage?.(msg);
        }
      },
    });
  }

  start(): void {
    this.running = true;
    this.connection.start();
    this.loop();
  }

  stop(): void {
    this.running = false;
    this.connection.stop();
  }

  private loop(): void {
    if (!this.running) return;
    this.renderFrame();
    this.schedule(() => this.loop());
  }

  renderFrame(): void {
    const options: RenderOptions = {
      width: this.opts.width,
      height: this.opts.height,
      showCoverage: this.showCoverage,
      dragGhost: this.drag ? { x: this.drag.x, y: this.drag.y } : null,
    };
    this.transform = render(this.ctx, this.store, options);
    this.renderCount += 1;
    this.opts.onRender?.(this.store);
  }

  send(cmd: OperatorCommand): string {
    const id = `c${++this.commandSeq}`;
    const tagged = { ...cmd, id };
    this.store.commandSent(id, cmd.kind);
    this.connection.send(serializeCommand(tagged));
    return id;
  }

  // -- operator actions ---------------------------------------------------
  forceScene(sceneId: string): string {
    return this.send({ kind: "force_scene", scene_id: sceneId });
  }

  pause(): string {
    return this.send({ kind: "pause" });
  }

  resume(): string {
    return this.send({ kind: "resume" });
  }

  requestCoverage(cellSize = 0.25): string {
    this.showCoverage = true;
    return this.send({ kind: "get_coverage", cell_size: cellSize });
  }

  toggleCoverage(): void {
    this.showCoverage = !this.showCoverage;
  }

  // -- dragging -------------------------------------------------------------
  /** Hit-test a canvas point against tag markers (12 px radius). */
  tagAt(cx: number, cy: number): number | null {
    if (!this.transform) return null;
    for (const track of this.store.tracks.values()) {
      const p = this.transform.toCanvas(track.x, track.y);
      if (Math.hypot(p.cx - cx, p.cy - cy) <= 12) return track.tag;
    }
    return null;
  }

  pointerDown(cx: number, cy: number): boolean {
    const tag = this.tagAt(cx, cy);
    if (tag === null || !this.transform) return false;
    const pos = this.transform.toStage(cx, cy);
    this.drag = { tag, ...pos };
    return true;
  }

  pointerMove(cx: number, cy: number): void {
    if (!this.drag || !this.transform) return;
    const pos = this.transform.toStage(cx, cy); // clamped to stage bounds
    this.drag = { tag: this.drag.tag, ...pos };
  }

  /** Finish a drag: emits move_tag with the clamped stage coordinates. */
  pointerUp(): string | null {
    if (!this.drag) return null;
    const { tag, x, y } = this.drag;
    this.drag = null;
    return this.send({ kind: "move_tag", tag_id: tag, x_m: x, y_m: y });
  }

  get dragging(): boolean {
    return this.drag !== null;
  }

  get stageTransform(): StageTransform | null {
    return this.transform;
  }
}
