/** Coordinator API client.  The dashboard is read-and-control only: it
 * issues GET /v1/metrics, GET /v1/metrics/history, and POST /v1/control —
 * nothing else, and never any payload that could carry patient rows. */

import type {
  ControlAction,
  ControlResult,
  CurrentMetrics,
  HistoryPayload,
  MetricsSnapshot,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export interface Api {
  fetchCurrent(): Promise<CurrentMetrics>;
  fetchHistory(): Promise<MetricsSnapshot[]>;
  control(action: ControlAction): Promise<ControlResult>;
}

export function makeApi(baseUrl: string, fetchFn: FetchLike): Api {
  const base = baseUrl.replace(/\/+$/, "");
  return {
    async fetchCurrent() {
      const resp = await fetchFn(`${base}/v1/metrics`);
      if (!resp.ok) {
        throw new Error(`metrics poll failed with status ${resp.status}`);
      }
      return (await resp.json()) as CurrentMetrics;
    },
    async fetchHistory() {
      const resp = await fetchFn(`${base}/v1/metrics/history`);
      if (!resp.ok) {
        throw new Error(`history poll failed with status ${resp.status}`);
      }
      return ((await resp.json()) as HistoryPayload).snapshots;
    },
    async control(action) {
      const resp = await fetchFn(`${base}/v1/control`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ action }),
      });
      const body = (await resp.json()) as Record<string, unknown>;
      if (!resp.ok) {
        return { ok: false, detail: String(body.detail ?? `status ${resp.status}`) };
      }
      return { ok: true, phase: String(body.phase) };
    },
  };
}
