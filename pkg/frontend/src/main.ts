/** Browser entry point: a polling loop over pure state transitions and
 * renderers.  All logic lives in state.ts / render.ts / chart.ts / api.ts,
 * which the test suite covers without a DOM. */

import { makeApi } from "./api.js";
import { resolveBaseUrl, resolvePollInterval } from "./config.js";
import { page } from "./render.js";
import {
  applyControlResult,
  applyFailure,
  applyPoll,
  initialState,
  setTab,
  type DashboardState,
} from "./state.js";
import type { ControlAction } from "./types.js";

function run(root: HTMLElement): void {
  // served from <coordinator>/ui/ by default; ?coordinator= overrides the base
  const api = makeApi(
    resolveBaseUrl(window.location.origin, window.location.search),
    (url, init) => fetch(url, init),
  );
  let state: DashboardState = initialState(
    resolvePollInterval(window.location.search),
  );
  let timer: number | undefined;

  const render = () => {
    root.innerHTML = page(state);
  };

  const poll = async () => {
    try {
      const [current, snapshots] = await Promise.all([
        api.fetchCurrent(),
        api.fetchHistory(),
      ]);
      state = applyPoll(state, current, snapshots);
    } catch {
      state = applyFailure(state);
    }
    render();
    timer = window.setTimeout(poll, state.pollIntervalMs);
  };

  root.addEventListener("click", async (event) => {
    const target = event.target as HTMLElement;
    const tab = target.closest<HTMLElement>("[data-tab]")?.dataset.tab;
    if (tab === "stats" || tab === "performance") {
      state = setTab(state, tab);
      render();
      return;
    }
    const action = target.closest<HTMLElement>("[data-action]")?.dataset.action;
    if (action) {
      const result = await api.control(action as ControlAction);
      state = applyControlResult(state, result.ok, result.detail);
      // re-fetch immediately so the new phase shows within one poll interval
      if (timer !== undefined) {
        window.clearTimeout(timer);
      }
      await poll();
    }
  });

  void poll();
}

const root = document.getElementById("app");
if (root) {
  run(root);
}
