/** FMAP raster parser: magic "FMAP", u32 w/h/c, f32 row-major interleaved. */

export interface FloatRaster {
  width: number;
  height: number;
  channels: number;
  data: Float32Array;
}

export function parseFmap(buf: ArrayBuffer): FloatRaster {
  const view = new DataView(buf);
  if (buf.byteLength < 16 || view.getUint32(0, false) !== 0x464d4150) {
    throw new Error("not an FMAP payload");
  }
  const width = view.getUint32(4, true);
  const height = view.getUint32(8, true);
  const channels = view.getUint32(12, true);
  const n = width * height * channels;
  if (buf.byteLength !== 16 + 4 * n) throw new Error("FMAP length mismatch");
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) data[i] = view.getFloat32(16 + 4 * i, true);
  return { width, height, channels, data };
}
