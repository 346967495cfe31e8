"""End-to-end pipeline orchestration plus the HTTP face of the system.

The Engine owns immutable artifacts (phrase index, corpus, entity index,
sentence annotations) and answers queries with two independent result lists:
phrase-level sentence answers and entity-level search results. Responses are
deterministic for a fixed index and options; only the timing fields vary.
"""

from __future__ import annotations

import datetime
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .config import Settings
from .corpus import Corpus, enumerate_phrases, tokenize
from .dense_index import (
    IndexConfig,
    PhraseIndex,
    build_index,
    exact_search,
    load_index,
    make_entries,
    save_index,
    search_dense,
)
from .encoder import Encoder, EncoderConfig, IdfTable
from .entity import (
    EntityDictionary,
    EntityIndex,
    EntityMention,
    EntitySearchResult,
    annotate_corpus,
    build_entity_index,
    dump_entity_dictionary,
    export_mentions,
    load_entity_dictionary,
    load_entity_index,
    save_entity_index,
    search_entities,
)
from .ranker import Answer, assemble_answers, blend_metadata, rerank_sparse

DICT_FILE = "dict.jsonl"
ENTITY_INDEX_FILE = "entity.json"
MENTIONS_FILE = "mentions.jsonl"


class QueryError(Exception):
    """Raised for queries the engine cannot embed (empty or all-unknown)."""


@dataclass
class AskResponse:
    query: str
    phrase_results: list[Answer]
    entity_results: list[EntitySearchResult]
    timing_ms: dict[str, float]
    index_version: str

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "phrase_results": [a.to_dict() for a in self.phrase_results],
            "entity_results": [r.to_dict() for r in self.entity_results],
            "timing_ms": self.timing_ms,
            "index_version": self.index_version,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


@dataclass
class Engine:
    index: PhraseIndex
    corpus: Corpus
    settings: Settings
    entity_index: EntityIndex | None = None
    annotations: dict[tuple[str, int], list[EntityMention]] = field(default_factory=dict)

    def ask(
        self,
        query: str,
        k: int | None = None,
        nprobe: int | None = None,
        lam: float | None = None,
        now: datetime.date | None = None,
    ) -> AskResponse:
        s = self.settings
        k = s.answers_k if k is None else k
        lam = s.sparse_weight if lam is None else lam
        nprobe = s.nprobe if nprobe is None else nprobe
        nprobe = max(1, min(nprobe, self.index.num_centroids))
        if k < 1:
            raise QueryError(f"k must be >= 1, got {k}")

        t0 = time.perf_counter()
        qv = self.index.encoder.encode_query(query)
        t1 = time.perf_counter()
        if qv.is_degenerate:
            raise QueryError("query has no encodable tokens")

        dense = search_dense(self.index, qv.dense, top_n=s.rerank_depth, nprobe=nprobe)
        t2 = time.perf_counter()

        ranked = rerank_sparse(dense, qv, lam, self.index)
        ranked = blend_metadata(
            ranked,
            self.index,
            self.corpus,
            w_recency=s.recency_weight,
            w_impact=s.impact_weight,
            w_external=s.external_weight,
            now=now,
            tau_days=s.recency_tau_days,
        )
        answers = assemble_answers(ranked, self.index, self.corpus, self.annotations, k)
        t3 = time.perf_counter()

        if self.entity_index is not None:
            ents = search_entities(self.entity_index, query, top_k=s.entity_top_k)
        else:
            ents = []
        t4 = time.perf_counter()

        return AskResponse(
            query=query,
            phrase_results=answers,
            entity_results=ents,
            timing_ms={
                "encode": (t1 - t0) * 1e3,
                "dense_search": (t2 - t1) * 1e3,
                "rerank_assemble": (t3 - t2) * 1e3,
                "entity_search": (t4 - t3) * 1e3,
                "total": (t4 - t0) * 1e3,
            },
            index_version=self.index.index_version,
        )

    def answer_sentences(self, query: str, k: int) -> list[Answer]:
        """Phrase pipeline only; used by the QA evaluator."""
        try:
            return self.ask(query, k=k).phrase_results
        except QueryError:
            return []


def build_engine(
    corpus: Corpus,
    settings: Settings,
    dictionary: EntityDictionary | None = None,
) -> Engine:
    """Encode every candidate phrase, cluster, and wire up the entity layer."""
    enc_cfg = EncoderConfig(
        dense_dim=settings.dense_dim,
        sparse_dim=settings.sparse_dim,
        context_weight=settings.context_weight,
        seed=settings.seed,
    )
    idx_cfg = IndexConfig(
        encoder=enc_cfg,
        num_centroids=settings.num_centroids,
        kmeans_iters=settings.kmeans_iters,
        seed=settings.seed,
        max_phrase_len=settings.max_phrase_len,
    )
    idf = IdfTable.build(corpus)
    encoder = Encoder(enc_cfg, idf)

    pairs = []
    for doc in corpus:
        for sent in corpus.sentences(doc.doc_id):
            s, e = sent.char_span
            tokens = tokenize(doc.abstract[s:e], offset=s)
            for cand in enumerate_phrases(doc, sent, settings.max_phrase_len):
                pairs.append((cand, encoder.encode_phrase_with_tokens(cand, tokens)))
    entries = make_entries(pairs)
    index = build_index(entries, idx_cfg, idf)

    entity_index = None
    annotations: dict[tuple[str, int], list[EntityMention]] = {}
    if dictionary is not None:
        entity_index = build_entity_index(
            corpus, dictionary, k1=settings.bm25_k1, b=settings.bm25_b
        )
        annotations = annotate_corpus(corpus, dictionary)
    return Engine(
        index=index,
        corpus=corpus,
        settings=settings,
        entity_index=entity_index,
        annotations=annotations,
    )


def save_engine(engine: Engine, out_dir: str | Path, dictionary: EntityDictionary | None = None) -> None:
    out = Path(out_dir)
    save_index(engine.index, engine.corpus, out)
    if engine.entity_index is not None:
        save_entity_index(engine.entity_index, out / ENTITY_INDEX_FILE)
        export_mentions(engine.annotations, out / MENTIONS_FILE)
    if dictionary is not None:
        dump_entity_dictionary(dictionary, out / DICT_FILE)


def load_engine(in_dir: str | Path, settings: Settings) -> Engine:
    src = Path(in_dir)
    index, corpus = load_index(src)
    entity_index = None
    annotations: dict[tuple[str, int], list[EntityMention]] = {}
    if (src / ENTITY_INDEX_FILE).exists():
        entity_index = load_entity_index(src / ENTITY_INDEX_FILE)
        entity_index.k1 = settings.bm25_k1
        entity_index.b = settings.bm25_b
    if (src / DICT_FILE).exists():
        dictionary = load_entity_dictionary(src / DICT_FILE)
        annotations = annotate_corpus(corpus, dictionary)
    return Engine(
        index=index,
        corpus=corpus,
        settings=settings,
        entity_index=entity_index,
        annotations=annotations,
    )


def create_app(engine: Engine | None):
    """FastAPI application; `engine=None` serves 503s until one is attached."""
    from fastapi import FastAPI, HTTPException, Query, Response

    app = FastAPI(title="phraseqa", docs_url=None, redoc_url=None)
    app.state.engine = engine

    def _engine() -> Engine:
        eng = app.state.engine
        if eng is None:
            raise HTTPException(status_code=503, detail="index not loaded")
        return eng

    @app.get("/api/health")
    def health() -> Response:
        eng = _engine()
        body = json.dumps(
            {"status": "ok", "index_version": eng.index.index_version},
            sort_keys=True,
            separators=(",", ":"),
        )
        return Response(content=body, media_type="application/json")

    @app.get("/api/ask")
    def api_ask(
        q: str = Query(..., min_length=1),
        k: int | None = Query(default=None, ge=1, le=1000),
        nprobe: int | None = Query(default=None, ge=1),
    ) -> Response:
        eng = _engine()
        try:
            resp = eng.ask(q, k=k, nprobe=nprobe)
        except QueryError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return Response(content=resp.to_json(), media_type="application/json")

    return app


__all__ = [
    "AskResponse",
    "Engine",
    "QueryError",
    "build_engine",
    "create_app",
    "exact_search",
    "load_engine",
    "save_engine",
]
