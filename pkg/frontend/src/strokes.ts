/**
 * Stroke capture: pointer samples -> resampled, tangent-annotated strokes
 * and the serialized sketch payload the service expects.
 *
 * Raw pointer noise corrupts direction channels, so strokes are resampled
 * to uniform 2-px arclength before tangents are estimated with central
 * differences. Stroke points are canvas pixels (x right, y down); the
 * service shares that convention for sketch payloads.
 */

export interface Point {
  x: number;
  y: number;
  t?: number; // timestamp, ms
}

export type StrokeKind = "contour" | "direction-stroke";

export interface StrokeCapture {
  kind: StrokeKind;
  points: Point[]; // resampled
  tangents: { x: number; y: number }[]; // unit, per resampled point
}

export const RESAMPLE_SPACING_PX = 2.0;

export function dedupe(points: Point[], minDist = 1e-6): Point[] {
  const out: Point[] = [];
  for (const p of points) {
    const last = out[out.length - 1];
    if (!last || Math.hypot(p.x - last.x, p.y - last.y) > minDist) {
      out.push(p);
    }
  }
  return out;
}

export function resample(points: Point[], spacing = RESAMPLE_SPACING_PX): Point[] {
  const pts = dedupe(points);
  if (pts.length < 2) return pts;
  const seg: number[] = [];
  let total = 0;
  for (let i = 0; i + 1 < pts.length; i++) {
    const d = Math.hypot(pts[i + 1].x - pts[i].x, pts[i + 1].y - pts[i].y);
    seg.push(d);
    total += d;
  }
  const n = Math.max(2, Math.floor(total / spacing) + 1);
  const out: Point[] = [];
  let cursor = 0;
  let acc = 0;
  for (let k = 0; k < n; k++) {
    const target = (total * k) / (n - 1);
    while (cursor < seg.length - 1 && acc + seg[cursor] < target) {
      acc += seg[cursor];
      cursor++;
    }
    const local = seg[cursor] > 0 ? (target - acc) / seg[cursor] : 0;
    out.push({
      x: pts[cursor].x * (1 - local) + pts[cursor + 1].x * local,
      y: pts[cursor].y * (1 - local) + pts[cursor + 1].y * local,
    });
  }
  return out;
}

/** Unit tangents by central differences (one-sided at the ends). */
export function tangents(points: Point[]): { x: number; y: number }[] {
  const out: { x: number; y: number }[] = [];
  for (let i = 0; i < points.length; i++) {
    const a = points[Math.max(0, i - 1)];
    const b = points[Math.min(points.length - 1, i + 1)];
    const dx = b.x - a.x;
    const dy = b.y - a.y;
    const n = Math.hypot(dx, dy) || 1;
    out.push({ x: dx / n, y: dy / n });
  }
  return out;
}

export function captureStroke(raw: Point[], kind: StrokeKind): StrokeCapture | null {
  const pts = resample(raw);
  if (pts.length < 2) return null; // degenerate stroke: discard with notice upstream
  if (kind === "contour") {
    const first = pts[0];
    const last = pts[pts.length - 1];
    if (Math.hypot(first.x - last.x, first.y - last.y) > 1e-9) {
      pts.push({ ...first }); // auto-close on pen-up
    }
  }
  return { kind, points: pts, tangents: tangents(pts) };
}

export interface SketchPayload {
  strokes: number[][][]; // per stroke: [ [x, y], ... ]
  mask_contour: number[][];
}

/**
 * Map captured strokes to the service sketch payload in image coordinates.
 * `canvasSize` and `imageSize` define the uniform scale between the drawing
 * surface and the service raster.
 */
export function serializeSketch(
  strokes: StrokeCapture[],
  contour: StrokeCapture,
  canvasSize: number,
  imageSize: number,
): SketchPayload {
  const s = imageSize / canvasSize;
  const mapPt = (p: Point) => [round3(p.x * s), round3(p.y * s)];
  return {
    strokes: strokes
      .filter((st) => st.kind === "direction-stroke")
      .map((st) => st.points.map(mapPt)),
    mask_contour: contour.points.map(mapPt),
  };
}

function round3(v: number): number {
  return Math.round(v * 1000) / 1000;
}

/** Even-odd scanline fill used for the client-side mask preview. */
export function fillContourPreview(contour: Point[], size: number): Uint8Array {
  const mask = new Uint8Array(size * size);
  if (contour.length < 3) return mask;
  const pts = [...contour];
  const first = pts[0];
  const last = pts[pts.length - 1];
  if (Math.hypot(first.x - last.x, first.y - last.y) > 1e-9) pts.push({ ...first });
  for (let r = 0; r < size; r++) {
    const yr = r;
    const xs: number[] = [];
    for (let i = 0; i + 1 < pts.length; i++) {
      const y0 = pts[i].y;
      const y1 = pts[i + 1].y;
      if ((y0 <= yr && yr < y1) || (y1 <= yr && yr < y0)) {
        const t = (yr - y0) / (y1 - y0);
        xs.push(pts[i].x + t * (pts[i + 1].x - pts[i].x));
      }
    }
    xs.sort((a, b) => a - b);
    for (let k = 0; k + 1 < xs.length; k += 2) {
      const lo = Math.max(0, Math.ceil(xs[k]));
      const hi = Math.min(size - 1, Math.floor(xs[k + 1]));
      for (let c = lo; c <= hi; c++) mask[r * size + c] = 1;
    }
  }
  return mask;
}
