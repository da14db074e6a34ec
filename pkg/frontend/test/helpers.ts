import type { CohortStats, CurrentMetrics, MetricsSnapshot } from "../src/types.js";

export function cohort(overrides: Partial<CohortStats> = {}): CohortStats {
  const base: CohortStats = {
    n: 100,
    n_pos: 10,
    n_neg: 90,
    n_male: 60,
    n_female: 40,
    age_hist: [0, 0, 5, 10, 20, 25, 20, 10, 5, 3, 2, 0],
  };
  return { ...base, ...overrides };
}

export function snapshot(overrides: Partial<MetricsSnapshot> = {}): MetricsSnapshot {
  const base: MetricsSnapshot = {
    round: 1,
    global_auc: 0.8123456789012345,
    client_aucs: { hospital_A: 0.71, hospital_B: 0.64 },
    cohort_stats: { hospital_A: cohort(), hospital_B: cohort({ n_male: 50, n_female: 50 }) },
    feature_dim: 119,
    stale_count: 0,
    n_updates: 2,
  };
  return { ...base, ...overrides };
}

export function current(overrides: Partial<CurrentMetrics> = {}): CurrentMetrics {
  return { ...snapshot(), phase: "running", ...overrides };
}

/** All values of an attribute in a markup string, in document order. */
export function attrValues(markup: string, attr: string): string[] {
  const out: string[] = [];
  const re = new RegExp(`${attr}="([^"]*)"`, "g");
  for (const match of markup.matchAll(re)) {
    out.push(match[1]);
  }
  return out;
}

/** Text content of the element carrying data-stat="key". */
export function statValue(markup: string, key: string): string {
  const re = new RegExp(`data-stat="${key}">([^<]*)<`);
  const match = markup.match(re);
  if (!match) {
    throw new Error(`no data-stat="${key}" in markup`);
  }
  return match[1];
}
