"""Corpus ingestion: abstracts with metadata, sentence segmentation, phrase enumeration.

Documents arrive as line-delimited JSON (one object per line, keys ``doc_id``,
``title``, ``abstract`` plus optional metadata). Sentence splitting and
tokenization are rule-based and deterministic so that every downstream char
offset can be traced back to the original abstract for highlighting.
"""

from __future__ import annotations

import datetime
import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator


class CorpusError(Exception):
    """Malformed corpus input. Carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    abstract: str
    date: datetime.date | None = None
    venue: str | None = None
    impact_factor: float | None = None
    external_score: float | None = None
    authors: tuple[str, ...] = ()
    url: str | None = None


@dataclass(frozen=True)
class Sentence:
    """One sentence of an abstract; char_span is a half-open [start, end) into it."""

    doc_id: str
    sent_index: int
    char_span: tuple[int, int]


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int


@dataclass(frozen=True)
class PhraseCandidate:
    """Candidate answer span: tokens [i, j) of one sentence, 1 <= j-i <= max_phrase_len."""

    doc_id: str
    sent_index: int
    token_span: tuple[int, int]
    char_span: tuple[int, int]  # absolute offsets into the abstract


_OPEN = "([{"
_CLOSE = ")]}"
_TERMINATORS = ".!?"


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def segment_sentences(text: str) -> list[tuple[int, int]]:
    """Split an abstract into sentence spans.

    Rule: a sentence ends after '.', '!' or '?' when the terminator is followed
    by whitespace and the next non-whitespace character is an uppercase letter
    or a digit. Terminators inside matched parentheses/brackets never split.
    Spans are trimmed of surrounding whitespace, ordered, non-overlapping, and
    together cover every non-whitespace character.
    """
    spans: list[tuple[int, int]] = []
    n = len(text)

    def emit(raw_start: int, raw_end: int) -> None:
        s, e = raw_start, raw_end
        while s < e and text[s].isspace():
            s += 1
        while e > s and text[e - 1].isspace():
            e -= 1
        if e > s:
            spans.append((s, e))

    start = 0
    depth = 0
    for i, ch in enumerate(text):
        if ch in _OPEN:
            depth += 1
        elif ch in _CLOSE:
            depth = max(0, depth - 1)
        elif ch in _TERMINATORS and depth == 0 and _boundary_after(text, i):
            emit(start, i + 1)
            start = i + 1
    emit(start, n)
    return spans


def _boundary_after(text: str, i: int) -> bool:
    j = i + 1
    if j >= len(text) or not text[j].isspace():
        return False
    while j < len(text) and text[j].isspace():
        j += 1
    return j < len(text) and (text[j].isupper() or text[j].isdigit())


def tokenize(text: str, offset: int = 0) -> list[Token]:
    """Whitespace-split, then peel leading/trailing punctuation into separate tokens.

    Interior punctuation (hyphens, slashes) stays inside its token, so offsets
    invert cleanly: ``text[t.start - offset : t.end - offset] == t.text``.
    Case is preserved; use :func:`norm_token` when matching.
    """
    tokens: list[Token] = []
    i = 0
    n = len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        lo, hi = i, j
        while lo < hi and _is_punct(text[lo]):
            tokens.append(Token(text[lo], offset + lo, offset + lo + 1))
            lo += 1
        trailing: list[Token] = []
        while hi > lo and _is_punct(text[hi - 1]):
            trailing.append(Token(text[hi - 1], offset + hi - 1, offset + hi))
            hi -= 1
        if hi > lo:
            tokens.append(Token(text[lo:hi], offset + lo, offset + hi))
        tokens.extend(reversed(trailing))
        i = j
    return tokens


def norm_token(token: Token | str) -> str:
    text = token if isinstance(token, str) else token.text
    return text.lower()


class Corpus:
    """Immutable ordered collection of documents with cached sentence spans."""

    def __init__(self, documents: list[Document]):
        self._docs = list(documents)
        self._by_id: dict[str, Document] = {}
        for d in self._docs:
            if d.doc_id in self._by_id:
                raise CorpusError(f"duplicate doc_id {d.doc_id!r}")
            self._by_id[d.doc_id] = d
        self._sentences: dict[str, list[Sentence]] = {}

    def __len__(self) -> int:
        return len(self._docs)

    def __iter__(self) -> Iterator[Document]:
        return iter(self._docs)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    def get(self, doc_id: str) -> Document:
        try:
            return self._by_id[doc_id]
        except KeyError:
            raise CorpusError(f"unknown doc_id {doc_id!r}") from None

    def sentences(self, doc_id: str) -> list[Sentence]:
        cached = self._sentences.get(doc_id)
        if cached is None:
            doc = self.get(doc_id)
            cached = [
                Sentence(doc_id, i, span)
                for i, span in enumerate(segment_sentences(doc.abstract))
            ]
            self._sentences[doc_id] = cached
        return cached

    def sentence_text(self, sentence: Sentence) -> str:
        doc = self.get(sentence.doc_id)
        s, e = sentence.char_span
        return doc.abstract[s:e]


def load_corpus(path: str | Path, on_error: str = "abort") -> Corpus:
    """Load a line-delimited JSON corpus file.

    ``on_error`` is "abort" (raise on the first malformed line) or "skip"
    (drop malformed lines). A duplicate doc_id always aborts.
    """
    if on_error not in ("abort", "skip"):
        raise ValueError(f"on_error must be 'abort' or 'skip', got {on_error!r}")
    docs: list[Document] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = _parse_document(line, lineno)
            except CorpusError:
                if on_error == "skip":
                    continue
                raise
            if doc.doc_id in seen:
                raise CorpusError(f"duplicate doc_id {doc.doc_id!r}", line=lineno, field="doc_id")
            seen.add(doc.doc_id)
            docs.append(doc)
    return Corpus(docs)


def _parse_document(line: str, lineno: int) -> Document:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"invalid JSON ({exc.msg})", line=lineno) from None
    if not isinstance(raw, dict):
        raise CorpusError("record is not a JSON object", line=lineno)

    def require_str(key: str, allow_empty: bool = True) -> str:
        value = raw.get(key)
        if not isinstance(value, str) or (not allow_empty and not value.strip()):
            raise CorpusError(f"missing or invalid field {key!r}", line=lineno, field=key)
        return value

    doc_id = require_str("doc_id", allow_empty=False)
    title = require_str("title")
    abstract = require_str("abstract", allow_empty=False)

    date = None
    if raw.get("date") is not None:
        try:
            date = datetime.date.fromisoformat(raw["date"])
        except (TypeError, ValueError):
            raise CorpusError(
                f"invalid date {raw['date']!r} (want YYYY-MM-DD)", line=lineno, field="date"
            ) from None

    impact = raw.get("impact_factor")
    if impact is not None:
        if not isinstance(impact, (int, float)) or impact < 0:
            raise CorpusError("impact_factor must be a non-negative number", line=lineno, field="impact_factor")
        impact = float(impact)

    external = raw.get("external_score")
    if external is not None:
        if not isinstance(external, (int, float)):
            raise CorpusError("external_score must be a number", line=lineno, field="external_score")
        external = float(external)

    authors = raw.get("authors", [])
    if not isinstance(authors, list) or not all(isinstance(a, str) for a in authors):
        raise CorpusError("authors must be an array of strings", line=lineno, field="authors")

    venue = raw.get("venue")
    url = raw.get("url")
    for key, value in (("venue", venue), ("url", url)):
        if value is not None and not isinstance(value, str):
            raise CorpusError(f"{key} must be a string", line=lineno, field=key)

    return Document(
        doc_id=doc_id,
        title=title,
        abstract=abstract,
        date=date,
        venue=venue,
        impact_factor=impact,
        external_score=external,
        authors=tuple(authors),
        url=url,
    )


def dump_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus back out in the input file format (used by index dirs)."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus:
            fh.write(json.dumps(document_to_record(doc), sort_keys=True) + "\n")


def document_to_record(doc: Document) -> dict:
    rec: dict = {"doc_id": doc.doc_id, "title": doc.title, "abstract": doc.abstract}
    if doc.date is not None:
        rec["date"] = doc.date.isoformat()
    if doc.venue is not None:
        rec["venue"] = doc.venue
    if doc.impact_factor is not None:
        rec["impact_factor"] = doc.impact_factor
    if doc.external_score is not None:
        rec["external_score"] = doc.external_score
    if doc.authors:
        rec["authors"] = list(doc.authors)
    if doc.url is not None:
        rec["url"] = doc.url
    return rec


def filter_recent(corpus: Corpus, cutoff: datetime.date) -> Corpus:
    """Keep documents dated strictly after ``cutoff``.

    Undated documents are excluded: the point of the filter is to certify
    recency, which an unknown date cannot do.
    """
    return Corpus([d for d in corpus if d.date is not None and d.date > cutoff])


def enumerate_phrases(doc: Document, sentence: Sentence, max_phrase_len: int) -> list[PhraseCandidate]:
    """All token spans [i, j) with 1 <= j-i <= max_phrase_len, in (i, j) order.

    For T tokens the count is sum_i min(max_phrase_len, T-i).
    """
    if max_phrase_len < 1:
        raise ValueError("max_phrase_len must be >= 1")
    s, e = sentence.char_span
    tokens = tokenize(doc.abstract[s:e], offset=s)
    out: list[PhraseCandidate] = []
    n = len(tokens)
    for i in range(n):
        for j in range(i + 1, min(i + max_phrase_len, n) + 1):
            out.append(
                PhraseCandidate(
                    doc_id=doc.doc_id,
                    sent_index=sentence.sent_index,
                    token_span=(i, j),
                    char_span=(tokens[i].start, tokens[j - 1].end),
                )
            )
    return out
