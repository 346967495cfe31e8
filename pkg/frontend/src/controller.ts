/** Query lifecycle: one logical in-flight request, last-write-wins.
 *
 * Every submission gets a sequence number; a response (or failure) is applied
 * only if no newer submission happened in the meantime, so the view renders
 * exclusively from the most recent completed response and result lists never
 * interleave.
 */

import type { AskResponse } from "./types.js";

export interface ViewState {
  query: string;
  loading: boolean;
  /** the last completed response, kept on screen while a new query loads */
  response: AskResponse | null;
  error: string | null;
}

export type Fetcher = (query: string) => Promise<AskResponse>;

export class SearchController {
  private seq = 0;
  private last: AskResponse | null = null;

  constructor(
    private readonly fetchAsk: Fetcher,
    private readonly onChange: (state: ViewState) => void,
  ) {}

  async submit(query: string): Promise<void> {
    const mine = ++this.seq;
    this.onChange({ query, loading: true, response: this.last, error: null });
    let response: AskResponse;
    try {
      response = await this.fetchAsk(query);
    } catch (err) {
      if (mine !== this.seq) {
        return; // a newer submission owns the view now
      }
      const message = err instanceof Error ? err.message : String(err);
      this.onChange({ query, loading: false, response: this.last, error: message });
      return;
    }
    if (mine !== this.seq) {
      return; // stale: superseded while in flight
    }
    this.last = response;
    this.onChange({ query, loading: false, response, error: null });
  }
}
