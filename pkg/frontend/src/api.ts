/**
 * Typed client for the modeling service. All synthesis logic lives on the
 * server; this module only moves payloads.
 */

import { SketchPayload } from "./strokes.js";
import { ViewPoseDeg } from "./camera.js";

export interface SynthesisSummary {
  strands: number;
  vertices?: number;
  hash?: string;
  job?: string;
}

export class ApiClient {
  constructor(readonly base: string = "") {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const r = await fetch(this.base + path, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    if (!r.ok) {
      const detail = await r.text().catch(() => "");
      throw new Error(`${path} failed (${r.status}): ${detail}`);
    }
    return (await r.json()) as T;
  }

  async createSession(backend?: string): Promise<string> {
    const body = backend ? { backend } : {};
    const out = await this.json<{ id: string }>("/v1/sessions", {
      method: "POST",
      body: JSON.stringify(body),
    });
    return out.id;
  }

  async submitSketch(sid: string, payload: SketchPayload): Promise<ArrayBuffer> {
    const r = await fetch(`${this.base}/v1/sessions/${sid}/sketch`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!r.ok) throw new Error(`sketch failed (${r.status}): ${await r.text()}`);
    return await r.arrayBuffer(); // dense orientation map, FMAP bytes
  }

  async synthesize(sid: string): Promise<SynthesisSummary> {
    let out = await this.json<SynthesisSummary>(`/v1/sessions/${sid}/synthesize`, {
      method: "POST",
      body: "{}",
    });
    while (out.job) {
      await new Promise((res) => setTimeout(res, 150));
      const j = await this.json<{ status: string; result?: SynthesisSummary; error?: string }>(
        `/v1/jobs/${out.job}`);
      if (j.status === "done" && j.result) return j.result;
      if (j.status === "error") throw new Error(j.error ?? "synthesis job failed");
    }
    return out;
  }

  async rotateView(sid: string, pose: ViewPoseDeg): Promise<void> {
    await this.json(`/v1/sessions/${sid}/view`, { method: "POST", body: JSON.stringify(pose) });
  }

  async applyEdit(sid: string, request: unknown): Promise<SynthesisSummary> {
    return await this.json<SynthesisSummary>(`/v1/sessions/${sid}/edits`, {
      method: "POST",
      body: JSON.stringify(request),
    });
  }

  async fetchStrands(sid: string): Promise<ArrayBuffer> {
    const r = await fetch(`${this.base}/v1/sessions/${sid}/strands?format=hair`);
    if (!r.ok) throw new Error(`strands failed (${r.status})`);
    return await r.arrayBuffer();
  }

  async health(): Promise<boolean> {
    try {
      const r = await fetch(`${this.base}/healthz`);
      return r.ok;
    } catch {
      return false;
    }
  }
}
