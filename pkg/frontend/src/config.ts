/** Page configuration from the URL.  The dashboard is normally served by the
 * coordinator itself at /ui/, so the API base defaults to the page origin;
 * `?coordinator=http://host:port` points it at a different coordinator and
 * `?poll=<ms>` overrides the polling interval. */

export const DEFAULT_POLL_INTERVAL_MS = 2000;

/** API base URL: the `coordinator` query parameter when present and
 * well-formed, otherwise the page origin. */
export function resolveBaseUrl(origin: string, search: string): string {
  const raw = new URLSearchParams(search).get("coordinator");
  if (raw === null || raw.trim() === "") {
    return origin;
  }
  try {
    const url = new URL(raw);
    if (url.protocol !== "http:" && url.protocol !== "https:") {
      return origin;
    }
    return url.origin;
  } catch {
    return origin;
  }
}

/** Polling interval in milliseconds: the `poll` query parameter when it is a
 * positive integer, otherwise the default of 2000 ms. */
export function resolvePollInterval(search: string): number {
  const raw = new URLSearchParams(search).get("poll");
  if (raw === null) {
    return DEFAULT_POLL_INTERVAL_MS;
  }
  const value = Number(raw);
  if (!Number.isInteger(value) || value <= 0) {
    return DEFAULT_POLL_INTERVAL_MS;
  }
  return value;
}
