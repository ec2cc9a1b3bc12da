import { describe, expect, it } from "vitest";

import { StrandViewport } from "../src/viewport.js";
import { parseHair } from "../src/hair.js";
import { buildHair } from "./hair.test.js";

function syntheticModel(nStrands: number, verts: number): ArrayBuffer {
  const strands: number[][][] = [];
  for (let s = 0; s < nStrands; s++) {
    const x = 0.2 + 0.6 * ((s * 0.6180339887) % 1);
    const z = 0.2 + 0.4 * ((s * 0.7548776662) % 1);
    const pts: number[][] = [];
    for (let v = 0; v < verts; v++) {
      pts.push([x + 0.02 * Math.sin(v * 0.4 + s), 0.8 - v * 0.018, z + 0.02 * Math.cos(v * 0.4)]);
    }
    strands.push(pts);
  }
  return buildHair(strands);
}

describe("viewport frame budget", () => {
  it("prepares a 1000-strand frame fast enough for 20 fps", () => {
    const canvas = { width: 800, height: 600, getContext: () => null };
    const vp = new StrandViewport(canvas as never);
    vp.setBatch(parseHair(syntheticModel(1000, 30)));

    // warm up, then time the per-frame transform + painter sort
    for (let i = 0; i < 3; i++) vp.prepareFrame();
    const frames = 20;
    const t0 = performance.now();
    for (let i = 0; i < frames; i++) {
      vp.camera.orbit(3, 1);
      const frame = vp.prepareFrame();
      expect(frame).not.toBeNull();
    }
    const perFrameMs = (performance.now() - t0) / frames;
    // 20 fps leaves 50 ms per frame; transform + sort must fit well inside
    expect(perFrameMs).toBeLessThan(50);
  });
});
