"""Dictionary-based entity tagging, CUI linking, and entity-level search.

Tagging is case-insensitive leftmost-longest greedy matching on token
boundaries. Entity search aggregates document-level BM25 relevance into
entity scores: score(e) = sum over docs d of BM25(query, d) * ln(1 + count(e, d)),
with counts taken over tagged mentions in each abstract.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .corpus import Corpus, Document, norm_token, tokenize

CTD_DETAIL_URL = "https://ctdbase.org/detail.go?type={kind}&acc={cui}"
NCBI_TAXONOMY_URL = "https://www.ncbi.nlm.nih.gov/Taxonomy/Browser/wwwtax.cgi?id={cui}"

ETYPES = ("disease", "drug", "gene", "species", "other")

# CTD detail pages are typed; map our entity types onto the closest CTD
# category so D/C-prefixed CUIs land on a working page.
_CTD_KIND = {"disease": "disease", "drug": "chem", "gene": "gene"}


class EntityError(Exception):
    pass


@dataclass(frozen=True)
class EntityInfo:
    cui: str
    canonical_name: str
    etype: str


@dataclass(frozen=True)
class EntityMention:
    doc_id: str
    sent_index: int
    char_span: tuple[int, int]  # within the sentence text
    surface: str
    cui: str
    canonical_name: str
    etype: str
    link_url: str

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "sent_index": self.sent_index,
            "char_span": list(self.char_span),
            "surface": self.surface,
            "cui": self.cui,
            "canonical_name": self.canonical_name,
            "etype": self.etype,
            "link_url": self.link_url,
        }


class EntityDictionary:
    """Normalized surface form -> entity; every synonym maps to exactly one CUI."""

    def __init__(self):
        self._by_surface: dict[tuple[str, ...], EntityInfo] = {}
        self._by_cui: dict[str, EntityInfo] = {}
        self.max_tokens = 0

    def __len__(self) -> int:
        return len(self._by_cui)

    def add(self, cui: str, canonical_name: str, etype: str, synonyms: Iterable[str]) -> None:
        if etype not in ETYPES:
            raise EntityError(f"unknown etype {etype!r} for cui {cui!r}")
        if cui in self._by_cui:
            raise EntityError(f"duplicate cui {cui!r}")
        info = EntityInfo(cui=cui, canonical_name=canonical_name, etype=etype)
        self._by_cui[cui] = info
        # The canonical name is always a synonym of its own cui.
        for surface in [canonical_name, *synonyms]:
            key = _surface_key(surface)
            if not key:
                raise EntityError(f"empty synonym for cui {cui!r}")
            prev = self._by_surface.get(key)
            if prev is not None and prev.cui != cui:
                raise EntityError(
                    f"synonym {surface!r} maps to both {prev.cui!r} and {cui!r}"
                )
            self._by_surface[key] = info
            self.max_tokens = max(self.max_tokens, len(key))

    def lookup_tokens(self, key: tuple[str, ...]) -> EntityInfo | None:
        return self._by_surface.get(key)

    def lookup_surface(self, surface: str) -> EntityInfo | None:
        return self._by_surface.get(_surface_key(surface))

    def info(self, cui: str) -> EntityInfo:
        return self._by_cui[cui]

    def cuis(self) -> list[str]:
        return sorted(self._by_cui)


def _surface_key(surface: str) -> tuple[str, ...]:
    return tuple(norm_token(t.text) for t in tokenize(surface))


def load_entity_dictionary(path: str | Path) -> EntityDictionary:
    d = EntityDictionary()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EntityError(f"line {lineno}: not valid JSON: {exc}")
            try:
                d.add(
                    cui=str(rec["cui"]),
                    canonical_name=str(rec["canonical_name"]),
                    etype=str(rec["etype"]),
                    synonyms=[str(s) for s in rec.get("synonyms", [])],
                )
            except KeyError as exc:
                raise EntityError(f"line {lineno}: missing field {exc}")
            except EntityError as exc:
                raise EntityError(f"line {lineno}: {exc}")
    return d


def dump_entity_dictionary(d: EntityDictionary, path: str | Path) -> None:
    surfaces_by_cui: dict[str, list[str]] = {cui: [] for cui in d.cuis()}
    for key, info in sorted(d._by_surface.items()):
        surfaces_by_cui[info.cui].append(" ".join(key))
    with open(path, "w", encoding="utf-8") as fh:
        for cui in d.cuis():
            info = d.info(cui)
            rec = {
                "cui": cui,
                "canonical_name": info.canonical_name,
                "etype": info.etype,
                "synonyms": surfaces_by_cui[cui],
            }
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def link_url_for(cui: str, etype: str) -> str:
    """CTD detail page for D/C-prefixed MeSH-style CUIs, NCBI Taxonomy for
    all-digit ids, empty string otherwise."""
    if len(cui) >= 2 and cui[0] in ("D", "C") and cui[1:].isdigit():
        return CTD_DETAIL_URL.format(kind=_CTD_KIND.get(etype, "chem"), cui=cui)
    if cui.isdigit():
        return NCBI_TAXONOMY_URL.format(cui=cui)
    return ""


def link_mention(mention: EntityMention, d: EntityDictionary) -> tuple[str, str]:
    info = d.lookup_surface(mention.surface)
    if info is None:
        raise EntityError(f"surface {mention.surface!r} not in dictionary")
    return info.cui, link_url_for(info.cui, info.etype)


def tag_mentions(
    text: str,
    d: EntityDictionary,
    doc_id: str = "",
    sent_index: int = 0,
) -> list[EntityMention]:
    """Leftmost-longest dictionary matches on token boundaries; disjoint spans."""
    tokens = tokenize(text)
    norms = [norm_token(t.text) for t in tokens]
    mentions: list[EntityMention] = []
    i = 0
    n = len(tokens)
    while i < n:
        hit = None
        limit = min(d.max_tokens, n - i)
        for width in range(limit, 0, -1):
            info = d.lookup_tokens(tuple(norms[i : i + width]))
            if info is not None:
                hit = (width, info)
                break
        if hit is None:
            i += 1
            continue
        width, info = hit
        start = tokens[i].start
        end = tokens[i + width - 1].end
        mentions.append(
            EntityMention(
                doc_id=doc_id,
                sent_index=sent_index,
                char_span=(start, end),
                surface=text[start:end],
                cui=info.cui,
                canonical_name=info.canonical_name,
                etype=info.etype,
                link_url=link_url_for(info.cui, info.etype),
            )
        )
        i += width
    return mentions


def annotate_corpus(
    corpus: Corpus, d: EntityDictionary
) -> dict[tuple[str, int], list[EntityMention]]:
    """Tag every sentence of every abstract; keys with no mentions are omitted."""
    out: dict[tuple[str, int], list[EntityMention]] = {}
    for doc in corpus:
        for sent in corpus.sentences(doc.doc_id):
            text = corpus.sentence_text(sent)
            found = tag_mentions(text, d, doc_id=doc.doc_id, sent_index=sent.sent_index)
            if found:
                out[(doc.doc_id, sent.sent_index)] = found
    return out


def export_mentions(
    annotations: Mapping[tuple[str, int], list[EntityMention]], path: str | Path
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(annotations):
            for m in annotations[key]:
                fh.write(json.dumps(m.to_dict(), sort_keys=True, separators=(",", ":")) + "\n")


@dataclass(frozen=True)
class EntitySearchResult:
    cui: str
    canonical_name: str
    etype: str
    score: float
    doc_ids: list[str]

    def to_dict(self) -> dict:
        return {
            "cui": self.cui,
            "canonical_name": self.canonical_name,
            "etype": self.etype,
            "score": self.score,
            "doc_ids": self.doc_ids,
        }


class EntityIndex:
    """Inverted index over abstract unigrams plus per-document entity counts."""

    def __init__(
        self,
        postings: dict[str, list[str]],
        tf: dict[str, dict[str, int]],
        doc_len: dict[str, int],
        entity_counts: dict[str, dict[str, int]],
        entity_info: dict[str, EntityInfo],
        k1: float = 1.2,
        b: float = 0.75,
    ):
        self.postings = postings
        self.tf = tf  # term -> {doc_id: count}
        self.doc_len = doc_len
        self.entity_counts = entity_counts  # cui -> {doc_id: count}
        self.entity_info = entity_info
        self.k1 = k1
        self.b = b
        self.n_docs = len(doc_len)
        self.avg_len = (sum(doc_len.values()) / self.n_docs) if self.n_docs else 0.0

    def bm25(self, query: str) -> dict[str, float]:
        """Per-document BM25 over the unique normalized query terms."""
        terms = sorted({norm_token(t.text) for t in tokenize(query)})
        scores: dict[str, float] = {}
        for term in terms:
            docs = self.tf.get(term)
            if not docs:
                continue
            df = len(docs)
            # Non-negative idf variant; keeps entity scores >= 0.
            idf = math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))
            for doc_id, tf in docs.items():
                norm = self.k1 * (1.0 - self.b + self.b * self.doc_len[doc_id] / self.avg_len)
                scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (self.k1 + 1.0) / (tf + norm)
        return scores


def build_entity_index(
    corpus: Corpus, d: EntityDictionary, k1: float = 1.2, b: float = 0.75
) -> EntityIndex:
    postings: dict[str, list[str]] = {}
    tf: dict[str, dict[str, int]] = {}
    doc_len: dict[str, int] = {}
    entity_counts: dict[str, dict[str, int]] = {}

    for doc in corpus:
        tokens = tokenize(doc.abstract)
        doc_len[doc.doc_id] = len(tokens)
        for tok in tokens:
            term = norm_token(tok.text)
            per_doc = tf.setdefault(term, {})
            per_doc[doc.doc_id] = per_doc.get(doc.doc_id, 0) + 1
        for sent in corpus.sentences(doc.doc_id):
            text = corpus.sentence_text(sent)
            for m in tag_mentions(text, d, doc_id=doc.doc_id, sent_index=sent.sent_index):
                per_doc = entity_counts.setdefault(m.cui, {})
                per_doc[doc.doc_id] = per_doc.get(doc.doc_id, 0) + 1

    for term, per_doc in tf.items():
        postings[term] = sorted(per_doc)
    entity_info = {cui: d.info(cui) for cui in entity_counts}
    return EntityIndex(postings, tf, doc_len, entity_counts, entity_info, k1=k1, b=b)


def search_entities(
    index: EntityIndex, query: str, top_k: int = 10, support_docs: int = 5
) -> list[EntitySearchResult]:
    """Rank entities by summed BM25 contributions; ties break by cui ascending."""
    if top_k < 1:
        raise EntityError(f"top_k must be >= 1, got {top_k}")
    doc_scores = index.bm25(query)
    if not doc_scores:
        return []
    results: list[EntitySearchResult] = []
    for cui in sorted(index.entity_counts):
        contribs: list[tuple[float, str]] = []
        total = 0.0
        for doc_id, count in index.entity_counts[cui].items():
            rel = doc_scores.get(doc_id, 0.0)
            if rel <= 0.0:
                continue
            part = rel * math.log(1.0 + count)
            total += part
            contribs.append((part, doc_id))
        if total <= 0.0:
            continue
        contribs.sort(key=lambda pc: (-pc[0], pc[1]))
        info = index.entity_info[cui]
        results.append(
            EntitySearchResult(
                cui=cui,
                canonical_name=info.canonical_name,
                etype=info.etype,
                score=total,
                doc_ids=[doc_id for _, doc_id in contribs[:support_docs]],
            )
        )
    results.sort(key=lambda r: (-r.score, r.cui))
    return results[:top_k]


def save_entity_index(index: EntityIndex, path: str | Path) -> None:
    payload = {
        "format": "phraseqa-entity-index",
        "version": 1,
        "k1": index.k1,
        "b": index.b,
        "doc_len": index.doc_len,
        "tf": index.tf,
        "entity_counts": index.entity_counts,
        "entity_info": {
            cui: {"canonical_name": info.canonical_name, "etype": info.etype}
            for cui, info in index.entity_info.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_entity_index(path: str | Path) -> EntityIndex:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != "phraseqa-entity-index":
        raise EntityError(f"not an entity index file: {path}")
    tf = {t: {d: int(c) for d, c in per.items()} for t, per in payload["tf"].items()}
    postings = {t: sorted(per) for t, per in tf.items()}
    entity_counts = {
        cui: {d: int(c) for d, c in per.items()}
        for cui, per in payload["entity_counts"].items()
    }
    entity_info = {
        cui: EntityInfo(cui=cui, canonical_name=rec["canonical_name"], etype=rec["etype"])
        for cui, rec in payload["entity_info"].items()
    }
    return EntityIndex(
        postings=postings,
        tf=tf,
        doc_len={d: int(n) for d, n in payload["doc_len"].items()},
        entity_counts=entity_counts,
        entity_info=entity_info,
        k1=float(payload["k1"]),
        b=float(payload["b"]),
    )
