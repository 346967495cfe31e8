/** Pure HTML-string renderers for the two result lists.
 *
 * Everything that originates in a response is escaped before insertion, so a
 * hostile sentence or entity name cannot inject markup. The answer sentence
 * is rebuilt from elementary segments at every span boundary, which keeps
 * the phrase highlight and entity links correct even when they overlap.
 */

import type { Answer, EntityResult, Mention } from "./types.js";

const REPLACEMENTS: Record<string, string> = {
  "&": "&amp;",
  "<": "&lt;",
  ">": "&gt;",
  '"': "&quot;",
  "'": "&#39;",
};

export function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (ch) => REPLACEMENTS[ch] as string);
}

function spanValid(span: readonly [number, number], length: number): boolean {
  return (
    Array.isArray(span) &&
    span.length === 2 &&
    Number.isInteger(span[0]) &&
    Number.isInteger(span[1]) &&
    span[0] >= 0 &&
    span[0] < span[1] &&
    span[1] <= length
  );
}

/** The bold sentence with the answer phrase marked and mentions linked. */
export function renderSentence(answer: Answer): string {
  const text = answer.sentence_text;

  let highlight: [number, number] | null = null;
  if (spanValid(answer.answer_span, text.length)) {
    highlight = answer.answer_span;
  } else {
    console.error(
      `answer ${answer.doc_id}#${answer.sent_index}: bad answer_span ` +
        `${JSON.stringify(answer.answer_span)} for length ${text.length}; rendering without highlight`,
    );
  }
  const mentions: Mention[] = [];
  for (const m of answer.entities) {
    if (spanValid(m.char_span, text.length)) {
      mentions.push(m);
    } else {
      console.error(
        `answer ${answer.doc_id}#${answer.sent_index}: bad mention span ` +
          `${JSON.stringify(m.char_span)} for ${m.cui}; rendering without link`,
      );
    }
  }

  const cuts = new Set<number>([0, text.length]);
  if (highlight) {
    cuts.add(highlight[0]);
    cuts.add(highlight[1]);
  }
  for (const m of mentions) {
    cuts.add(m.char_span[0]);
    cuts.add(m.char_span[1]);
  }
  const points = [...cuts].sort((a, b) => a - b);

  let html = "";
  for (let i = 0; i + 1 < points.length; i++) {
    const begin = points[i] as number;
    const end = points[i + 1] as number;
    let segment = escapeHtml(text.slice(begin, end));
    if (highlight && highlight[0] <= begin && end <= highlight[1]) {
      segment = `<mark>${segment}</mark>`;
    }
    const mention = mentions.find((m) => m.char_span[0] <= begin && end <= m.char_span[1]);
    if (mention) {
      segment = mention.link_url
        ? `<a class="entity" href="${escapeHtml(mention.link_url)}" title="${escapeHtml(
            mention.canonical_name,
          )} (${escapeHtml(mention.etype)})">${segment}</a>`
        : `<u class="entity" title="${escapeHtml(mention.canonical_name)} (${escapeHtml(
            mention.etype,
          )})">${segment}</u>`;
    }
    html += segment;
  }
  return `<b>${html}</b>`;
}

export function renderAnswer(answer: Answer): string {
  const meta: string[] = [];
  const title = escapeHtml(answer.title);
  meta.push(answer.url ? `<a class="doc" href="${escapeHtml(answer.url)}">${title}</a>` : title);
  if (answer.date) meta.push(escapeHtml(answer.date));
  if (answer.venue) meta.push(escapeHtml(answer.venue));
  if (answer.authors.length) meta.push(escapeHtml(answer.authors.join(", ")));
  return [
    `<article class="answer" data-doc="${escapeHtml(answer.doc_id)}" data-sent="${answer.sent_index}">`,
    `<div class="sentence">${renderSentence(answer)}</div>`,
    `<div class="meta">${meta.join(" &middot; ")}</div>`,
    `<div class="score">score ${answer.scores.total.toFixed(4)}</div>`,
    `</article>`,
  ].join("\n");
}

export function renderAnswerList(answers: Answer[]): string {
  if (answers.length === 0) {
    return `<p class="empty">No answers.</p>`;
  }
  return answers.map(renderAnswer).join("\n");
}

export function renderEntityList(entities: EntityResult[]): string {
  if (entities.length === 0) {
    return `<p class="empty">No matching entities.</p>`;
  }
  const rows = entities.map(
    (e) =>
      `<li class="entity-row" data-cui="${escapeHtml(e.cui)}">` +
      `<span class="name">${escapeHtml(e.canonical_name)}</span> ` +
      `<span class="etype">${escapeHtml(e.etype)}</span> ` +
      `<span class="escore">${e.score.toFixed(4)}</span> ` +
      `<span class="docs">${e.doc_ids.map(escapeHtml).join(", ")}</span>` +
      `</li>`,
  );
  return `<ol class="entities">\n${rows.join("\n")}\n</ol>`;
}

export function renderLatency(timing: Record<string, number>): string {
  const total = timing["total"];
  return total === undefined ? "" : `${total.toFixed(1)} ms`;
}
