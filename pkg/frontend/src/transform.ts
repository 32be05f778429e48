// Stage <-> canvas coordinate mapping. Stage y (depth) grows upward on
// screen, floor-plan style, so the canvas y axis is flipped.

export interface CanvasPoint {
  cx: number;
  cy: number;
}

export class StageTransform {
  readonly scale: number;
  readonly offsetX: number;
  readonly offsetY: number;

  constructor(
    readonly stageWidth: number,
    readonly stageDepth: number,
    readonly canvasWidth: number,
    readonly canvasHeight: number,
    readonly margin = 24,
  ) {
    this.scale = Math.min(
      (canvasWidth - 2 * margin) / stageWidth,
      (canvasHeight - 2 * margin) / stageDepth,
    );
    // Center the stage rectangle in the canvas.
    this.offsetX = (canvasWidth - stageWidth * this.scale) / 2;
    this.offsetY = (canvasHeight - stageDepth * this.scale) / 2;
  }

  toCanvas(x: number, y: number): CanvasPoint {
    return {
      cx: this.offsetX + x * this.scale,
      cy: this.canvasHeight - this.offsetY - y * this.scale,
    };
  }

  /** Canvas point to stage coordinates, clamped to the stage rectangle. */
  toStage(cx: number, cy: number): { x: number; y: number } {
    const x = (cx - this.offsetX) / this.scale;
    const y = (this.canvasHeight - this.offsetY - cy) / this.scale;
    return {
      x: Math.min(Math.max(x, 0), this.stageWidth),
      y: Math.min(Math.max(y, 0), this.stageDepth),
    };
  }

  /** A round scale-bar length (meters) roughly a fifth of the stage width. */
  scaleBarMeters(): number {
    const raw = this.stageWidth / 5;
    const steps = [0.5, 1, 2, 5, 10];
    let best = steps[0];
    for (const s of steps) {
      if (Math.abs(s - raw) < Math.abs(best - raw)) best = s;
    }
    return best;
  }
}
