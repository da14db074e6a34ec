/** Pure HTML renderers.  Every function maps payload data to a markup
 * string; the browser entry point only swaps innerHTML and wires events.
 * Keeping renderers pure lets the test suite assert on exact output without
 * a DOM. */

import { chartSvg, legend } from "./chart.js";
import type { DashboardState } from "./state.js";
import { displayedRound, legalActions } from "./state.js";
import type { CohortStats, ControlAction, CurrentMetrics } from "./types.js";
import { AGE_BINS, ageBinLabel, settingName } from "./types.js";

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function statCell(label: string, value: number | string, key: string): string {
  return (
    `<div class="stat"><span class="stat-label">${esc(label)}</span>` +
    `<span class="stat-value" data-stat="${esc(key)}">${value}</span></div>`
  );
}

/** Age histogram with bar heights proportional to bin counts. */
export function ageHistogram(bins: number[]): string {
  const max = Math.max(1, ...bins);
  const bars = bins
    .map((count, i) => {
      const pct = (count / max) * 100;
      return (
        `<div class="bar-slot" title="${ageBinLabel(i)}: ${count}">` +
        `<div class="bar" data-bin="${i}" data-count="${count}" style="height:${pct}%"></div>` +
        `<span class="bar-label">${ageBinLabel(i)}</span></div>`
      );
    })
    .join("");
  return `<div class="histogram">${bars}</div>`;
}

function sumHist(cohorts: CohortStats[]): number[] {
  const total = new Array(AGE_BINS).fill(0);
  for (const c of cohorts) {
    c.age_hist.forEach((count, i) => {
      total[i] += count;
    });
  }
  return total;
}

/** Page 1: cohort statistics — sex and label counts per hospital and
 * overall, round counter, feature dimension, pooled age histogram.  Renders
 * from registration stats alone when no round has completed yet. */
export function statsView(current: CurrentMetrics | null): string {
  if (!current) {
    return `<section class="page" id="page-stats"><p class="placeholder">Waiting for the first metrics poll…</p></section>`;
  }
  const hospitals = Object.entries(current.cohort_stats).sort(([a], [b]) =>
    a < b ? -1 : a > b ? 1 : 0,
  );
  const cards = hospitals
    .map(([hid, stats]) => {
      return (
        `<article class="card" data-hospital="${esc(hid)}">` +
        `<h3>${esc(hid)}</h3>` +
        statCell("patients", stats.n, `${hid}.n`) +
        statCell("male", stats.n_male, `${hid}.n_male`) +
        statCell("female", stats.n_female, `${hid}.n_female`) +
        statCell("positive", stats.n_pos, `${hid}.n_pos`) +
        statCell("negative", stats.n_neg, `${hid}.n_neg`) +
        `</article>`
      );
    })
    .join("");
  const all = hospitals.map(([, stats]) => stats);
  const totals =
    `<article class="card card-total" data-hospital="__all__">` +
    `<h3>All hospitals</h3>` +
    statCell("patients", all.reduce((acc, s) => acc + s.n, 0), "total.n") +
    statCell("male", all.reduce((acc, s) => acc + s.n_male, 0), "total.n_male") +
    statCell("female", all.reduce((acc, s) => acc + s.n_female, 0), "total.n_female") +
    statCell("positive", all.reduce((acc, s) => acc + s.n_pos, 0), "total.n_pos") +
    statCell("negative", all.reduce((acc, s) => acc + s.n_neg, 0), "total.n_neg") +
    `</article>`;
  return (
    `<section class="page" id="page-stats">` +
    `<div class="headline">` +
    statCell("communication rounds", current.round, "round") +
    statCell("feature dimensions", current.feature_dim, "feature_dim") +
    statCell("updates this round", current.n_updates, "n_updates") +
    statCell("stale updates", current.stale_count, "stale_count") +
    `</div>` +
    `<div class="cards">${cards}${totals}</div>` +
    `<h3 class="hist-title">Age distribution (10-year bins)</h3>` +
    ageHistogram(sumHist(all)) +
    `</section>`
  );
}

/** Page 2: federated AUC per round with per-hospital local-baseline
 * reference lines; chart values are the raw history payload. */
export function performanceView(state: DashboardState): string {
  if (!state.history.length) {
    return `<section class="page" id="page-performance"><p class="placeholder">No completed rounds yet — the chart appears after the first aggregation.</p></section>`;
  }
  const entries = legend(state.history)
    .map(
      (e) =>
        `<span class="legend-entry legend-${e.kind}"><span class="swatch"></span>${esc(e.label)}</span>`,
    )
    .join("");
  return (
    `<section class="page" id="page-performance">` +
    chartSvg(state.history) +
    `<div class="legend">${entries}</div>` +
    `</section>`
  );
}

const ACTIONS: ControlAction[] = ["start", "pause", "resume", "stop"];

/** Control panel: one button per action, enabled only for transitions that
 * are legal in the current phase. */
export function controlPanel(phase: string): string {
  const legal = new Set(legalActions(phase));
  const buttons = ACTIONS.map((action) => {
    const disabled = legal.has(action) ? "" : " disabled";
    return `<button class="control" data-action="${action}"${disabled}>${action}</button>`;
  }).join("");
  return `<div class="controls" data-phase="${esc(phase)}">${buttons}</div>`;
}

/** Whole-app shell: header with round/phase, stale banner, toast, tabs. */
export function page(state: DashboardState): string {
  const phase = state.current ? state.current.phase : "unknown";
  const banner = state.stale
    ? `<div class="banner stale-banner">coordinator unreachable — showing last received data</div>`
    : "";
  const toast = state.notice
    ? `<div class="banner toast">${esc(state.notice)}</div>`
    : "";
  const tab = (id: DashboardState["activeTab"], label: string) =>
    `<button class="tab${state.activeTab === id ? " active" : ""}" data-tab="${id}">${label}</button>`;
  const body =
    state.activeTab === "stats" ? statsView(state.current) : performanceView(state);
  return (
    `<header class="topbar">` +
    `<h1>Federated training monitor</h1>` +
    `<span class="phase phase-${esc(phase)}" data-stat="phase">${esc(phase)}</span>` +
    `<span class="round-counter">round <b data-stat="header-round">${displayedRound(state)}</b></span>` +
    controlPanel(phase) +
    `</header>` +
    banner +
    toast +
    `<nav class="tabbar">${tab("stats", "Cohort statistics")}${tab("performance", "Model performance")}</nav>` +
    `<main>${body}</main>`
  );
}

export { settingName };
