/** Wire payloads of the coordinator's telemetry and control endpoints.
 * These mirror the server's response models field for field; the dashboard
 * never displays a number that is not in one of these payloads. */

export type Phase = "idle" | "running" | "paused" | "finished";

export type ControlAction = "start" | "pause" | "resume" | "stop";

/** Aggregate per-hospital statistics (no row-level data). */
export interface CohortStats {
  n: number;
  n_pos: number;
  n_neg: number;
  n_male: number;
  n_female: number;
  /** 12 ten-year bins: 0-9, 10-19, ..., 110+. */
  age_hist: number[];
}

/** One per-round telemetry snapshot from /v1/metrics/history. */
export interface MetricsSnapshot {
  round: number;
  global_auc: number | null;
  client_aucs: Record<string, number>;
  cohort_stats: Record<string, CohortStats>;
  feature_dim: number;
  stale_count: number;
  n_updates: number;
}

/** /v1/metrics: the current snapshot plus the run phase. */
export interface CurrentMetrics extends MetricsSnapshot {
  phase: string;
}

export interface HistoryPayload {
  snapshots: MetricsSnapshot[];
}

export interface ControlResult {
  ok: boolean;
  phase?: string;
  detail?: string;
}

export const AGE_BINS = 12;

export function ageBinLabel(index: number): string {
  return index === AGE_BINS - 1 ? `${index * 10}+` : `${index * 10}-${index * 10 + 9}`;
}

/** Display name for a hospital id, matching the report's setting names
 * ("hospital_A" -> "Hospital A Local Training"). */
export function settingName(hospitalId: string): string {
  const pretty = hospitalId
    .split(/[_\s]+/)
    .map((part) => (part ? part[0].toUpperCase() + part.slice(1).toLowerCase() : part))
    .join(" ");
  return `${pretty} Local Training`;
}

export const FEDERATED_SETTING = "Federated Training";
