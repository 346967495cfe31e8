/** Wire types mirroring the JSON documents served by GET /api/ask. */

export interface Mention {
  doc_id: string;
  sent_index: number;
  /** character offsets within the containing sentence, [begin, end) */
  char_span: [number, number];
  surface: string;
  cui: string;
  canonical_name: string;
  etype: string;
  /** empty string when the concept has no known detail page */
  link_url: string;
}

export interface AnswerScores {
  dense: number;
  sparse: number;
  metadata: number;
  total: number;
}

export interface Answer {
  doc_id: string;
  sent_index: number;
  phrase_text: string;
  sentence_text: string;
  /** character offsets of the answer phrase within sentence_text, [begin, end) */
  answer_span: [number, number];
  title: string;
  date: string | null;
  venue: string | null;
  url: string | null;
  authors: string[];
  scores: AnswerScores;
  entities: Mention[];
}

export interface EntityResult {
  cui: string;
  canonical_name: string;
  etype: string;
  score: number;
  doc_ids: string[];
}

export interface AskResponse {
  query: string;
  phrase_results: Answer[];
  entity_results: EntityResult[];
  timing_ms: Record<string, number>;
  index_version: string;
}

export interface HealthResponse {
  status: string;
  index_version: string;
}
