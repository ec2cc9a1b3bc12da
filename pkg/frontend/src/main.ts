import { StudioApp } from "./app.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

window.addEventListener("DOMContentLoaded", () => {
  const sketch = el<HTMLCanvasElement>("sketch");
  const viewport = el<HTMLCanvasElement>("viewport");
  const statusBar = el<HTMLDivElement>("status");
  const app = new StudioApp(sketch, viewport, (msg) => (statusBar.textContent = msg));

  el<HTMLButtonElement>("mode-contour").onclick = () => app.setDrawMode("contour");
  el<HTMLButtonElement>("mode-stroke").onclick = () => app.setDrawMode("direction-stroke");
  el<HTMLButtonElement>("build").onclick = () => void app.build();
  el<HTMLButtonElement>("mode-orbit").onclick = () => app.setViewportMode("orbit");
  el<HTMLButtonElement>("mode-cut").onclick = () => app.setViewportMode("cut");

  const vp = viewport;
  vp.addEventListener("pointerdown", (e) => {
    const r = vp.getBoundingClientRect();
    app.viewport?.pointerDown(e.clientX - r.left, e.clientY - r.top);
    vp.setPointerCapture(e.pointerId);
  });
  vp.addEventListener("pointermove", (e) => {
    const r = vp.getBoundingClientRect();
    app.viewport?.pointerMove(e.clientX - r.left, e.clientY - r.top);
  });
  vp.addEventListener("pointerup", () => app.viewport?.pointerUp());

  void app.start().catch((e) => (statusBar.textContent = `session failed: ${e.message}`));
});
