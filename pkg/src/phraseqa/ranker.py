"""Candidate re-ranking and answer assembly.

Scores compose additively: total = dense + λ·sparse + metadata. The sparse
term re-ranks the dense top list; the metadata term is off by default (all
weights zero) and never changes totals in that configuration.
"""

from __future__ import annotations

import datetime
import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .corpus import Corpus
from .dense_index import PhraseIndex
from .encoder import QueryVector
from .entity import EntityMention


@dataclass(frozen=True)
class ScoredCandidate:
    phrase_id: int
    dense_score: float
    sparse_score: float
    metadata_score: float
    total: float


@dataclass(frozen=True)
class Answer:
    doc_id: str
    sent_index: int
    phrase_text: str
    sentence_text: str
    answer_span: tuple[int, int]  # within sentence_text
    title: str
    date: str | None
    venue: str | None
    url: str | None
    authors: tuple[str, ...]
    dense_score: float
    sparse_score: float
    metadata_score: float
    total: float
    entities: tuple[EntityMention, ...]

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "sent_index": self.sent_index,
            "phrase_text": self.phrase_text,
            "sentence_text": self.sentence_text,
            "answer_span": list(self.answer_span),
            "title": self.title,
            "date": self.date,
            "venue": self.venue,
            "url": self.url,
            "authors": list(self.authors),
            "scores": {
                "dense": self.dense_score,
                "sparse": self.sparse_score,
                "metadata": self.metadata_score,
                "total": self.total,
            },
            "entities": [m.to_dict() for m in self.entities],
        }


def _sort_ranked(cands: list[ScoredCandidate]) -> list[ScoredCandidate]:
    return sorted(cands, key=lambda c: (-c.total, c.phrase_id))


def rerank_sparse(
    candidates: Sequence[tuple[int, float]],
    q: QueryVector,
    lam: float,
    index: PhraseIndex,
) -> list[ScoredCandidate]:
    """Re-score (phrase_id, dense_score) pairs with the sparse dot product."""
    if lam < 0:
        raise ValueError(f"sparse weight must be non-negative, got {lam}")
    out = []
    for phrase_id, dense in candidates:
        sparse = q.sparse.dot(index.entry(phrase_id).sparse)
        out.append(
            ScoredCandidate(
                phrase_id=phrase_id,
                dense_score=float(dense),
                sparse_score=float(sparse),
                metadata_score=0.0,
                total=float(dense) + lam * float(sparse),
            )
        )
    return _sort_ranked(out)


def recency_score(doc_date: datetime.date | None, now: datetime.date, tau_days: float) -> float:
    if doc_date is None:
        return 0.0
    age = max(0, (now - doc_date).days)  # future-dated docs count as brand new
    return math.exp(-age / tau_days)


def impact_score(impact_factor: float | None) -> float:
    if impact_factor is None:
        return 0.0
    return impact_factor / (1.0 + impact_factor)


def blend_metadata(
    ranked: Sequence[ScoredCandidate],
    index: PhraseIndex,
    corpus: Corpus,
    w_recency: float = 0.0,
    w_impact: float = 0.0,
    w_external: float = 0.0,
    now: datetime.date | None = None,
    tau_days: float = 365.0,
) -> list[ScoredCandidate]:
    """Replace each candidate's metadata term and re-sort by the new total."""
    if w_recency == 0.0 and w_impact == 0.0 and w_external == 0.0:
        # Identity on ordering and totals; metadata_score forced to 0.
        return [
            c if c.metadata_score == 0.0 else replace(c, metadata_score=0.0, total=c.total - c.metadata_score)
            for c in ranked
        ]
    if now is None:
        now = datetime.date.today()
    out = []
    for c in ranked:
        doc = corpus.get(index.entry(c.phrase_id).cand.doc_id)
        meta = (
            w_recency * recency_score(doc.date, now, tau_days)
            + w_impact * impact_score(doc.impact_factor)
            + w_external * (doc.external_score if doc.external_score is not None else 0.0)
        )
        out.append(replace(c, metadata_score=meta, total=c.total - c.metadata_score + meta))
    return _sort_ranked(out)


def assemble_answers(
    ranked: Sequence[ScoredCandidate],
    index: PhraseIndex,
    corpus: Corpus,
    annotations: Mapping[tuple[str, int], list[EntityMention]] | None,
    k: int,
) -> list[Answer]:
    """Expand candidates to sentence answers, one per (doc, sentence), top k.

    The input is already sorted, so the first candidate seen for a sentence is
    its best one.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    answers: list[Answer] = []
    seen: set[tuple[str, int]] = set()
    for c in ranked:
        cand = index.entry(c.phrase_id).cand
        key = (cand.doc_id, cand.sent_index)
        if key in seen:
            continue
        seen.add(key)
        doc = corpus.get(cand.doc_id)
        sent = corpus.sentences(cand.doc_id)[cand.sent_index]
        sent_text = corpus.sentence_text(sent)
        span = (cand.char_span[0] - sent.char_span[0], cand.char_span[1] - sent.char_span[0])
        mentions = tuple(annotations.get(key, [])) if annotations else ()
        answers.append(
            Answer(
                doc_id=cand.doc_id,
                sent_index=cand.sent_index,
                phrase_text=sent_text[span[0] : span[1]],
                sentence_text=sent_text,
                answer_span=span,
                title=doc.title,
                date=doc.date.isoformat() if doc.date else None,
                venue=doc.venue,
                url=doc.url,
                authors=doc.authors,
                dense_score=c.dense_score,
                sparse_score=c.sparse_score,
                metadata_score=c.metadata_score,
                total=c.total,
                entities=mentions,
            )
        )
        if len(answers) == k:
            break
    return answers
