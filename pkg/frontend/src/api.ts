import type { AskResponse, HealthResponse } from "./types.js";

export interface AskOptions {
  k?: number;
  nprobe?: number;
  signal?: AbortSignal;
}

/** Join the configurable API base with the ask route and query parameters. */
export function buildAskUrl(base: string, query: string, opts: AskOptions = {}): string {
  const params = new URLSearchParams({ q: query });
  if (opts.k !== undefined) params.set("k", String(opts.k));
  if (opts.nprobe !== undefined) params.set("nprobe", String(opts.nprobe));
  return `${base.replace(/\/+$/, "")}/api/ask?${params.toString()}`;
}

async function errorDetail(resp: Response): Promise<string> {
  // the service puts a human-readable message under "detail" on 4xx/5xx
  try {
    const body: unknown = await resp.json();
    if (body && typeof body === "object" && typeof (body as { detail?: unknown }).detail === "string") {
      return (body as { detail: string }).detail;
    }
  } catch {
    // non-JSON body; fall through to the status line
  }
  return `HTTP ${resp.status}`;
}

export async function fetchAsk(base: string, query: string, opts: AskOptions = {}): Promise<AskResponse> {
  const resp = await fetch(buildAskUrl(base, query, opts), { signal: opts.signal });
  if (!resp.ok) {
    throw new Error(await errorDetail(resp));
  }
  return (await resp.json()) as AskResponse;
}

export async function fetchHealth(base: string): Promise<HealthResponse> {
  const resp = await fetch(`${base.replace(/\/+$/, "")}/api/health`);
  if (!resp.ok) {
    throw new Error(await errorDetail(resp));
  }
  return (await resp.json()) as HealthResponse;
}
