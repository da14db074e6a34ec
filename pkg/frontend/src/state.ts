/** Dashboard state and the pure transitions the poll loop applies to it. */

import type {
  ControlAction,
  CurrentMetrics,
  MetricsSnapshot,
} from "./types.js";

export interface DashboardState {
  /** Latest /v1/metrics payload, kept verbatim. */
  current: CurrentMetrics | null;
  /** Latest /v1/metrics/history snapshots, kept verbatim. */
  history: MetricsSnapshot[];
  /** True when the last poll failed; the last snapshot stays on screen. */
  stale: boolean;
  /** Message for the toast area (e.g. a rejected control action). */
  notice: string | null;
  pollIntervalMs: number;
  activeTab: "stats" | "performance";
}

export function initialState(pollIntervalMs = 2000): DashboardState {
  return {
    current: null,
    history: [],
    stale: false,
    notice: null,
    pollIntervalMs,
    activeTab: "stats",
  };
}

function assertIncreasingRounds(snapshots: MetricsSnapshot[]): void {
  for (let i = 1; i < snapshots.length; i++) {
    if (snapshots[i].round <= snapshots[i - 1].round) {
      throw new Error(
        `history rounds must be strictly increasing, got ${snapshots[i - 1].round} then ${snapshots[i].round}`,
      );
    }
  }
}

/** A successful poll replaces both payloads wholesale (no merging, so every
 * rendered number is traceable to the payload). */
export function applyPoll(
  state: DashboardState,
  current: CurrentMetrics,
  snapshots: MetricsSnapshot[],
): DashboardState {
  assertIncreasingRounds(snapshots);
  const latest = snapshots.length ? snapshots[snapshots.length - 1].round : 0;
  if (snapshots.length && current.round < latest) {
    throw new Error(
      `current round ${current.round} behind history round ${latest}`,
    );
  }
  return { ...state, current, history: snapshots, stale: false };
}

/** A failed poll keeps the last data and raises the stale banner. */
export function applyFailure(state: DashboardState): DashboardState {
  return { ...state, stale: true };
}

export function applyControlResult(
  state: DashboardState,
  ok: boolean,
  detail?: string,
): DashboardState {
  return { ...state, notice: ok ? null : (detail ?? "control action rejected") };
}

export function setTab(
  state: DashboardState,
  tab: DashboardState["activeTab"],
): DashboardState {
  return { ...state, activeTab: tab };
}

/** The round number shown in the header: always the latest snapshot round. */
export function displayedRound(state: DashboardState): number {
  if (state.history.length) {
    return state.history[state.history.length - 1].round;
  }
  return state.current ? state.current.round : 0;
}

const LEGAL: Record<string, ControlAction[]> = {
  idle: ["start"],
  running: ["pause", "stop"],
  paused: ["resume", "stop"],
  finished: [],
};

/** Which control buttons are enabled in a given phase. */
export function legalActions(phase: string): ControlAction[] {
  return LEGAL[phase] ?? [];
}
