/**
 * Studio wiring: sketch pane on the left, strand viewport on the right.
 * All synthesis happens server-side; one in-flight synthesis per session is
 * enforced here with optimistic progress states.
 */

import { ApiClient } from "./api.js";
import { parseHair } from "./hair.js";
import { StateMachine } from "./state.js";
import {
  Point,
  StrokeCapture,
  captureStroke,
  fillContourPreview,
  serializeSketch,
} from "./strokes.js";
import { StrandViewport } from "./viewport.js";

const IMAGE_SIZE = 32; // service raster resolution

export class StudioApp {
  readonly api: ApiClient;
  readonly machine = new StateMachine();
  session: string | null = null;
  strokes: StrokeCapture[] = [];
  contour: StrokeCapture | null = null;
  private raw: Point[] = [];
  private drawMode: "contour" | "direction-stroke" = "contour";
  private inFlight = false;
  viewport: StrandViewport | null = null;

  constructor(
    private readonly sketchCanvas: HTMLCanvasElement,
    private readonly viewportCanvas: HTMLCanvasElement,
    private readonly status: (msg: string) => void,
    base = "",
  ) {
    this.api = new ApiClient(base);
    this.viewport = new StrandViewport(viewportCanvas, {
      onPose: (pose) => this.onOrbit(pose),
      onCutStroke: (stroke) => this.onCut(stroke),
    });
    this.bindSketchEvents();
  }

  async start(): Promise<void> {
    this.session = await this.api.createSession();
    this.machine.transition("sketching");
    this.status("draw the hair contour, then direction strokes, then Build");
  }

  setDrawMode(mode: "contour" | "direction-stroke"): void {
    this.drawMode = mode;
  }

  setViewportMode(mode: "orbit" | "cut"): void {
    this.viewport?.setMode(mode);
    if (mode === "cut") this.machine.transition("editing");
    else this.machine.transition("viewing");
  }

  private bindSketchEvents(): void {
    const c = this.sketchCanvas;
    const pos = (e: PointerEvent): Point => {
      const r = c.getBoundingClientRect();
      return { x: e.clientX - r.left, y: e.clientY - r.top, t: e.timeStamp };
    };
    c.addEventListener("pointerdown", (e) => {
      this.raw = [pos(e)];
      c.setPointerCapture(e.pointerId);
    });
    c.addEventListener("pointermove", (e) => {
      if (this.raw.length) {
        this.raw.push(pos(e));
        this.redrawSketch();
      }
    });
    c.addEventListener("pointerup", () => {
      if (this.raw.length) this.finishStroke();
    });
  }

  finishStroke(): void {
    const captured = captureStroke(this.raw, this.drawMode);
    this.raw = [];
    if (!captured) {
      this.status("stroke too short, discarded");
      return;
    }
    if (captured.kind === "contour") {
      this.contour = captured;
    } else {
      this.strokes.push(captured);
      this.machine.strokeAdded();
    }
    this.redrawSketch();
  }

  redrawSketch(): void {
    const ctx = this.sketchCanvas.getContext("2d");
    if (!ctx) return;
    const size = this.sketchCanvas.width;
    ctx.clearRect(0, 0, size, size);
    if (this.contour) {
      // client-side preview of the mask fill
      const mask = fillContourPreview(
        this.contour.points.map((p) => ({ x: (p.x * IMAGE_SIZE) / size, y: (p.y * IMAGE_SIZE) / size })),
        IMAGE_SIZE,
      );
      const px = size / IMAGE_SIZE;
      ctx.fillStyle = "rgba(200, 60, 60, 0.15)";
      for (let r = 0; r < IMAGE_SIZE; r++) {
        for (let cc = 0; cc < IMAGE_SIZE; cc++) {
          if (mask[r * IMAGE_SIZE + cc]) ctx.fillRect(cc * px, r * px, px, px);
        }
      }
      drawPolyline(ctx, this.contour.points, "#c33", 2);
    }
    for (const s of this.strokes) drawPolyline(ctx, s.points, "#36c", 2);
    if (this.raw.length > 1) {
      drawPolyline(ctx, this.raw, this.drawMode === "contour" ? "#c33" : "#36c", 1);
    }
  }

  async build(): Promise<void> {
    if (!this.session || this.inFlight) return;
    if (!this.contour) {
      this.status("draw the hair contour first");
      return;
    }
    this.inFlight = true;
    this.machine.transition("synthesizing");
    this.status("synthesizing...");
    try {
      const payload = serializeSketch(this.strokes, this.contour, this.sketchCanvas.width, IMAGE_SIZE);
      await this.api.submitSketch(this.session, payload);
      const summary = await this.api.synthesize(this.session);
      await this.refreshStrands();
      this.machine.transition("viewing");
      this.status(`synthesized ${summary.strands} strands; orbit to inspect`);
    } catch (e) {
      this.machine.transition("sketching");
      this.status(`synthesis failed: ${(e as Error).message}`);
    } finally {
      this.inFlight = false;
    }
  }

  async refreshStrands(): Promise<void> {
    if (!this.session || !this.viewport) return;
    const buf = await this.api.fetchStrands(this.session);
    this.viewport.setBatch(parseHair(buf));
    this.viewport.draw();
  }

  private async onOrbit(pose: { y_deg: number; x_deg: number; z_deg: number }): Promise<void> {
    if (!this.session || this.inFlight) return;
    try {
      await this.api.rotateView(this.session, pose);
      await this.refreshStrands();
      // the camera now bakes its rotation into the strands; reset it so the
      // screen keeps showing the current view head-on
      this.viewport?.camera.setPose({ y_deg: 0, x_deg: 0, z_deg: 0 });
      this.viewport?.draw();
    } catch (e) {
      this.status(`view update failed: ${(e as Error).message}`);
    }
  }

  private async onCut(strokePx: number[][]): Promise<void> {
    if (!this.session || !this.viewport) return;
    const side = Math.min(this.viewportCanvas.width, this.viewportCanvas.height);
    const scale = IMAGE_SIZE / side;
    const stroke = strokePx.map(([x, y]) => [x * scale, y * scale]);
    try {
      const out = await this.api.applyEdit(this.session, { op: "cut", stroke_px: stroke });
      await this.refreshStrands();
      this.status(`cut applied, ${out.strands} strands remain`);
    } catch (e) {
      this.status(`cut failed: ${(e as Error).message}`);
    }
  }
}

function drawPolyline(
  ctx: CanvasRenderingContext2D,
  pts: { x: number; y: number }[],
  style: string,
  width: number,
): void {
  if (pts.length < 2) return;
  ctx.beginPath();
  ctx.moveTo(pts[0].x, pts[0].y);
  for (const p of pts.slice(1)) ctx.lineTo(p.x, p.y);
  ctx.strokeStyle = style;
  ctx.lineWidth = width;
  ctx.stroke();
}
