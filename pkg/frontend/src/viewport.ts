/**
 * Strand viewport: canvas line rendering with an orbit camera.
 *
 * Strands arrive as a flat vertex batch; each frame transforms the batch
 * into a preallocated buffer, sorts strands far-to-near, and draws line
 * strips. Orbit drags emit debounced view-pose updates; cut strokes and
 * wisp picks are routed to the edit callback in screen coordinates.
 */

import { OrbitCamera, ViewPoseDeg } from "./camera.js";
import { StrandBatch, paintOrder, projectVertices } from "./hair.js";

export interface ViewportCallbacks {
  onPose?: (pose: ViewPoseDeg) => void;
  onCutStroke?: (strokePx: number[][]) => void;
}

export class StrandViewport {
  readonly camera = new OrbitCamera();
  batch: StrandBatch | null = null;
  private projected: Float32Array = new Float32Array(0);
  private mode: "orbit" | "cut" = "orbit";
  private drag: { x: number; y: number } | null = null;
  private cutTrail: number[][] = [];

  constructor(
    private readonly canvas: Pick<HTMLCanvasElement, "width" | "height"> & {
      getContext(id: "2d"): CanvasRenderingContext2D | null;
    },
    private readonly callbacks: ViewportCallbacks = {},
  ) {}

  setBatch(batch: StrandBatch): void {
    this.batch = batch;
    this.projected = new Float32Array(batch.positions.length);
  }

  setMode(mode: "orbit" | "cut"): void {
    this.mode = mode;
  }

  /** Transform + sort only; drawing is separate so tests can time this. */
  prepareFrame(): { order: Uint32Array; projected: Float32Array } | null {
    if (!this.batch) return null;
    const side = Math.min(this.canvas.width, this.canvas.height);
    projectVertices(
      this.batch,
      this.camera.matrix(),
      this.camera.target,
      side,
      this.canvas.width / 2,
      this.canvas.height / 2,
      this.projected,
    );
    return { order: paintOrder(this.batch, this.projected), projected: this.projected };
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    const frame = this.prepareFrame();
    if (!ctx || !frame || !this.batch) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    const { order, projected } = frame;
    for (const s of order) {
      const o = this.batch.offsets[s];
      const c = this.batch.counts[s];
      if (c < 2) continue;
      ctx.beginPath();
      ctx.moveTo(projected[o * 3], projected[o * 3 + 1]);
      for (let v = 1; v < c; v++) {
        ctx.lineTo(projected[(o + v) * 3], projected[(o + v) * 3 + 1]);
      }
      const col = this.batch.colors;
      ctx.strokeStyle = col
        ? `rgb(${255 * col[s * 3]}, ${255 * col[s * 3 + 1]}, ${255 * col[s * 3 + 2]})`
        : "#5a4632";
      ctx.lineWidth = 1;
      ctx.stroke();
    }
    if (this.cutTrail.length > 1) {
      ctx.beginPath();
      ctx.moveTo(this.cutTrail[0][0], this.cutTrail[0][1]);
      for (const [x, y] of this.cutTrail.slice(1)) ctx.lineTo(x, y);
      ctx.strokeStyle = "#d33";
      ctx.lineWidth = 2;
      ctx.stroke();
    }
  }

  pointerDown(x: number, y: number): void {
    this.drag = { x, y };
    if (this.mode === "cut") this.cutTrail = [[x, y]];
  }

  pointerMove(x: number, y: number): void {
    if (!this.drag) return;
    if (this.mode === "orbit") {
      this.camera.orbit(x - this.drag.x, y - this.drag.y);
      this.drag = { x, y };
      this.draw();
    } else {
      this.cutTrail.push([x, y]);
      this.draw();
    }
  }

  pointerUp(): void {
    if (!this.drag) return;
    this.drag = null;
    if (this.mode === "orbit") {
      this.callbacks.onPose?.(this.camera.pose());
    } else if (this.cutTrail.length > 1) {
      this.callbacks.onCutStroke?.(this.cutTrail);
      this.cutTrail = [];
      this.draw();
    }
  }
}
