/**
 * HAIR binary strand payload parser and flat-typed-array strand batches.
 *
 * Layout: magic "HAIR", u32 strand count, per strand u32 vertex count and
 * f32 xyz per vertex; optional trailing blocks tagged ROOT (u8 per strand)
 * and COLR (f32 rgb per strand). Little-endian throughout.
 */

export interface StrandBatch {
  positions: Float32Array; // xyz interleaved for all vertices
  offsets: Uint32Array; // per strand: first vertex index
  counts: Uint32Array; // per strand: vertex count
  rooted: Uint8Array;
  colors: Float32Array | null; // rgb per strand
}

export function parseHair(buf: ArrayBuffer): StrandBatch {
  const view = new DataView(buf);
  if (buf.byteLength < 8 || view.getUint32(0, false) !== 0x48414952) {
    // "HAIR" big-endian magic comparison: H=0x48 A=0x41 I=0x49 R=0x52
    throw new Error("not a HAIR payload");
  }
  const count = view.getUint32(4, true);
  let off = 8;
  const counts = new Uint32Array(count);
  const offsets = new Uint32Array(count);
  let total = 0;
  const spans: [number, number][] = [];
  for (let i = 0; i < count; i++) {
    if (off + 4 > buf.byteLength) throw new Error("truncated HAIR strand header");
    const n = view.getUint32(off, true);
    off += 4;
    if (off + 12 * n > buf.byteLength) throw new Error("truncated HAIR strand data");
    counts[i] = n;
    offsets[i] = total;
    spans.push([off, n]);
    total += n;
    off += 12 * n;
  }
  const positions = new Float32Array(total * 3);
  for (let i = 0; i < count; i++) {
    const [start, n] = spans[i];
    for (let v = 0; v < n * 3; v++) {
      positions[offsets[i] * 3 + v] = view.getFloat32(start + 4 * v, true);
    }
  }
  const rooted = new Uint8Array(count);
  let colors: Float32Array | null = null;
  while (off + 8 <= buf.byteLength) {
    const tag = String.fromCharCode(
      view.getUint8(off), view.getUint8(off + 1), view.getUint8(off + 2), view.getUint8(off + 3));
    const len = view.getUint32(off + 4, true);
    off += 8;
    if (off + len > buf.byteLength) throw new Error("truncated HAIR extension");
    if (tag === "ROOT") {
      for (let i = 0; i < Math.min(count, len); i++) rooted[i] = view.getUint8(off + i);
    } else if (tag === "COLR") {
      colors = new Float32Array(count * 3);
      for (let i = 0; i < count * 3 && 4 * i < len; i++) {
        colors[i] = view.getFloat32(off + 4 * i, true);
      }
    }
    off += len;
  }
  return { positions, offsets, counts, rooted, colors };
}

/**
 * Transform all vertices by a row-major 3x3 matrix about a center and
 * project to screen space; writes (x, y, depth) triples into `out`.
 * Kept allocation-free so a 1k-strand model stays well inside a frame.
 */
export function projectVertices(
  batch: StrandBatch,
  m: Float64Array,
  center: [number, number, number],
  scale: number,
  offsetX: number,
  offsetY: number,
  out: Float32Array,
): void {
  const p = batch.positions;
  const [cx, cy, cz] = center;
  for (let i = 0; i < p.length; i += 3) {
    const x = p[i] - cx;
    const y = p[i + 1] - cy;
    const z = p[i + 2] - cz;
    const rx = m[0] * x + m[1] * y + m[2] * z;
    const ry = m[3] * x + m[4] * y + m[5] * z;
    const rz = m[6] * x + m[7] * y + m[8] * z;
    out[i] = offsetX + rx * scale;
    out[i + 1] = offsetY - ry * scale;
    out[i + 2] = rz;
  }
}

/** Painter-order strand indices: far strands first (mean depth desc). */
export function paintOrder(batch: StrandBatch, projected: Float32Array): Uint32Array {
  const n = batch.counts.length;
  const depth = new Float64Array(n);
  for (let s = 0; s < n; s++) {
    let acc = 0;
    const o = batch.offsets[s];
    const c = batch.counts[s];
    for (let v = 0; v < c; v++) acc += projected[(o + v) * 3 + 2];
    depth[s] = c ? acc / c : 0;
  }
  const order = new Uint32Array(n);
  for (let i = 0; i < n; i++) order[i] = i;
  // larger depth = farther from the camera; draw those first
  return order.sort((a, b) => depth[b] - depth[a]);
}
