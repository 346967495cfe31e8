/** Page wiring: query box, dual result lists, latency line, error banner. */

import { fetchAsk, fetchHealth } from "./api.js";
import { SearchController, type ViewState } from "./controller.js";
import { renderAnswerList, renderEntityList, renderLatency } from "./render.js";

function mustFind<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`missing page element #${id}`);
  }
  return el as T;
}

function apiBase(): string {
  // ?api=http://host:port lets the page talk to a service on another origin
  return new URLSearchParams(window.location.search).get("api") ?? "";
}

function applyState(state: ViewState): void {
  const banner = mustFind<HTMLDivElement>("error");
  banner.hidden = state.error === null;
  banner.textContent = state.error ?? "";

  mustFind<HTMLSpanElement>("status").textContent = state.loading ? "searching…" : "";

  if (state.response) {
    mustFind<HTMLDivElement>("answers").innerHTML = renderAnswerList(state.response.phrase_results);
    mustFind<HTMLDivElement>("entities").innerHTML = renderEntityList(state.response.entity_results);
    mustFind<HTMLSpanElement>("latency").textContent = renderLatency(state.response.timing_ms);
  }
}

function start(): void {
  const base = apiBase();
  let inflight: AbortController | null = null;

  const controller = new SearchController((query) => {
    inflight?.abort(); // one network request in flight per session
    inflight = new AbortController();
    return fetchAsk(base, query, { signal: inflight.signal });
  }, applyState);

  const box = mustFind<HTMLInputElement>("query");
  box.addEventListener("keydown", (ev) => {
    // submission on Enter only; no per-keystroke search
    if (ev.key === "Enter") {
      const query = box.value.trim();
      if (query) {
        void controller.submit(query);
      }
    }
  });
  box.focus();

  fetchHealth(base).then(
    (health) => {
      mustFind<HTMLSpanElement>("version").textContent = `index ${health.index_version}`;
    },
    (err: unknown) => {
      mustFind<HTMLSpanElement>("version").textContent =
        err instanceof Error ? err.message : "service unreachable";
    },
  );
}

document.addEventListener("DOMContentLoaded", start);
