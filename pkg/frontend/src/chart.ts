/** Pure SVG chart construction for the performance page.
 *
 * Every plotted value is copied verbatim from the history payload into a
 * data attribute (data-round / data-auc), so tests and audits can compare
 * the rendered chart against /v1/metrics/history exactly — there is no
 * smoothing, rounding, or interpolation of plotted values.
 */

import type { MetricsSnapshot } from "./types.js";
import { FEDERATED_SETTING, settingName } from "./types.js";

export interface ChartGeometry {
  width: number;
  height: number;
  margin: { top: number; right: number; bottom: number; left: number };
}

export const DEFAULT_GEOMETRY: ChartGeometry = {
  width: 640,
  height: 320,
  margin: { top: 16, right: 16, bottom: 32, left: 48 },
};

export interface FederatedPoint {
  round: number;
  auc: number;
}

/** Rounds with a recorded federated AUC, in payload order. */
export function federatedSeries(snapshots: MetricsSnapshot[]): FederatedPoint[] {
  return snapshots
    .filter((s) => s.global_auc !== null)
    .map((s) => ({ round: s.round, auc: s.global_auc as number }));
}

export interface Scale {
  x(round: number): number;
  y(auc: number): number;
  roundMin: number;
  roundMax: number;
  aucMin: number;
  aucMax: number;
}

/** Linear scales covering the data (AUC axis padded to at least [0.5, 1]). */
export function makeScale(
  points: FederatedPoint[],
  references: number[],
  geom: ChartGeometry = DEFAULT_GEOMETRY,
): Scale {
  const rounds = points.map((p) => p.round);
  const aucs = [...points.map((p) => p.auc), ...references];
  const roundMin = rounds.length ? Math.min(...rounds) : 0;
  const roundMaxRaw = rounds.length ? Math.max(...rounds) : 1;
  const roundMax = roundMaxRaw > roundMin ? roundMaxRaw : roundMin + 1;
  const aucMin = Math.min(0.5, ...aucs);
  const aucMax = Math.max(1.0, ...aucs);
  const { width, height, margin } = geom;
  const innerW = width - margin.left - margin.right;
  const innerH = height - margin.top - margin.bottom;
  return {
    x: (round) => margin.left + ((round - roundMin) / (roundMax - roundMin)) * innerW,
    y: (auc) => margin.top + (1 - (auc - aucMin) / (aucMax - aucMin)) * innerH,
    roundMin,
    roundMax,
    aucMin,
    aucMax,
  };
}

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** The full performance chart as an SVG string: federated AUC polyline plus
 * one horizontal reference line per hospital's latest local-baseline AUC. */
export function chartSvg(
  snapshots: MetricsSnapshot[],
  geom: ChartGeometry = DEFAULT_GEOMETRY,
): string {
  const points = federatedSeries(snapshots);
  const latest = snapshots.length ? snapshots[snapshots.length - 1] : null;
  const clientAucs = latest ? latest.client_aucs : {};
  const refs = Object.values(clientAucs);
  const scale = makeScale(points, refs, geom);
  const { width, height, margin } = geom;

  const parts: string[] = [];
  parts.push(
    `<svg class="chart" viewBox="0 0 ${width} ${height}" role="img" aria-label="AUC by round">`,
  );

  // axes
  const x0 = margin.left;
  const x1 = width - margin.right;
  const y0 = height - margin.bottom;
  const y1 = margin.top;
  parts.push(`<line class="axis" x1="${x0}" y1="${y0}" x2="${x1}" y2="${y0}"/>`);
  parts.push(`<line class="axis" x1="${x0}" y1="${y0}" x2="${x0}" y2="${y1}"/>`);
  for (const tick of [scale.aucMin, (scale.aucMin + scale.aucMax) / 2, scale.aucMax]) {
    const y = scale.y(tick);
    parts.push(
      `<text class="tick" x="${x0 - 6}" y="${y}" text-anchor="end" dominant-baseline="middle">${tick.toFixed(2)}</text>`,
    );
  }
  for (const tick of [scale.roundMin, scale.roundMax]) {
    const x = scale.x(tick);
    parts.push(
      `<text class="tick" x="${x}" y="${y0 + 16}" text-anchor="middle">round ${tick}</text>`,
    );
  }

  // per-hospital local-baseline reference lines
  for (const [hid, auc] of Object.entries(clientAucs).sort()) {
    const y = scale.y(auc);
    parts.push(
      `<line class="reference" data-hospital="${esc(hid)}" data-auc="${auc}" ` +
        `x1="${x0}" y1="${y}" x2="${x1}" y2="${y}"/>`,
    );
  }

  // federated polyline + exact data points
  if (points.length) {
    const coords = points
      .map((p) => `${scale.x(p.round)},${scale.y(p.auc)}`)
      .join(" ");
    parts.push(`<polyline class="federated" fill="none" points="${coords}"/>`);
    for (const p of points) {
      parts.push(
        `<circle class="point" data-round="${p.round}" data-auc="${p.auc}" ` +
          `cx="${scale.x(p.round)}" cy="${scale.y(p.auc)}" r="3"/>`,
      );
    }
  }
  parts.push("</svg>");
  return parts.join("");
}

/** Legend entries: the federated series plus one per reference line, labeled
 * with the comparison-table setting names. */
export function legend(snapshots: MetricsSnapshot[]): Array<{ label: string; kind: string }> {
  const latest = snapshots.length ? snapshots[snapshots.length - 1] : null;
  const entries: Array<{ label: string; kind: string }> = [
    { label: FEDERATED_SETTING, kind: "federated" },
  ];
  for (const hid of Object.keys(latest ? latest.client_aucs : {}).sort()) {
    entries.push({ label: settingName(hid), kind: "reference" });
  }
  return entries;
}
