"""Deterministic phrase and query encoders producing paired dense + sparse vectors.

Dense vectors come from feature hashing: every token gets a unit-norm random
vector drawn from a counter-based generator keyed by a stable hash of
(token, seed), so encoding is a pure function of its inputs. Sparse vectors
are tf-idf weighted unigrams+bigrams of the surrounding sentence, hashed into
a fixed number of buckets. A precomputed-vector import path exists for
plugging in externally trained representations.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from .corpus import Corpus, Document, PhraseCandidate, Sentence, Token, norm_token, tokenize

# Fixed 50-word English function-word list. Deliberately excludes negations
# ("no", "not"): they carry answer content in this domain.
STOPWORDS = frozenset(
    """
    a about an and are as at be been but by can could did do does for from had
    has have how if in into is it its of on or should that the their there
    these this those to was were what when where which who whom why with
    """.split()
)


@dataclass(frozen=True)
class EncoderConfig:
    dense_dim: int = 256
    sparse_dim: int = 1 << 20
    context_weight: float = 0.25
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "dense_dim": self.dense_dim,
            "sparse_dim": self.sparse_dim,
            "context_weight": self.context_weight,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "EncoderConfig":
        return cls(
            dense_dim=int(raw["dense_dim"]),
            sparse_dim=int(raw["sparse_dim"]),
            context_weight=float(raw["context_weight"]),
            seed=int(raw["seed"]),
        )


class EncodingError(Exception):
    pass


@dataclass(frozen=True)
class SparseVector:
    """Sorted (term_id, weight) pairs; term_ids strictly ascending, weights finite."""

    term_ids: np.ndarray  # int64, ascending, unique
    weights: np.ndarray  # float64

    def __post_init__(self):
        ids = np.ascontiguousarray(self.term_ids, dtype=np.int64)
        weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if ids.shape != weights.shape or ids.ndim != 1:
            raise EncodingError(f"mismatched sparse shapes: {ids.shape} vs {weights.shape}")
        if ids.shape[0] and np.any(ids[1:] <= ids[:-1]):
            raise EncodingError("sparse term_ids must be strictly ascending")
        if not np.all(np.isfinite(weights)):
            raise EncodingError("sparse weights must be finite")
        object.__setattr__(self, "term_ids", ids)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return int(self.term_ids.shape[0])

    def dot(self, other: "SparseVector") -> float:
        from . import kernels

        return float(kernels.sparse_dot(self.term_ids, self.weights, other.term_ids, other.weights))

    def to_pairs(self) -> list[list]:
        return [[int(t), float(w)] for t, w in zip(self.term_ids, self.weights)]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]]) -> "SparseVector":
        items = sorted((int(t), float(w)) for t, w in pairs)
        ids = [t for t, _ in items]
        if len(set(ids)) != len(ids):
            raise EncodingError("duplicate term_id in sparse vector")
        return cls(np.array(ids, dtype=np.int64), np.array([w for _, w in items], dtype=np.float64))


EMPTY_SPARSE = SparseVector(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64))


@dataclass(frozen=True)
class PhraseVector:
    dense: np.ndarray  # float32, unit norm
    sparse: SparseVector


@dataclass(frozen=True)
class QueryVector:
    dense: np.ndarray
    sparse: SparseVector
    raw_text: str

    @property
    def is_degenerate(self) -> bool:
        return not bool(np.any(self.dense))


def _hash64(data: str) -> int:
    return int.from_bytes(hashlib.blake2b(data.encode("utf-8"), digest_size=8).digest(), "little")


def hash_token_vector(token: str, dim: int, seed: int) -> np.ndarray:
    """Unit-norm float32 vector, a pure function of (token, dim, seed).

    A Philox counter-based generator is keyed with a stable 64-bit hash of the
    token and seed, then dim standard normals are drawn and normalized.
    """
    if dim < 8:
        raise EncodingError(f"dense dim must be >= 8, got {dim}")
    key = _hash64(f"{seed}\x1f{token}")
    gen = np.random.Generator(np.random.Philox(key=key))
    v = gen.standard_normal(dim)
    v /= np.linalg.norm(v)
    return v.astype(np.float32)


def hash_term_id(ngram: str, sparse_dim: int) -> int:
    """Stable bucket id for an n-gram (standard feature hashing; collisions accepted)."""
    return _hash64(ngram) % sparse_dim


def ngrams(norm_tokens: list[str]) -> list[str]:
    """Unigrams plus space-joined bigrams, in sentence order."""
    grams = list(norm_tokens)
    grams.extend(f"{a} {b}" for a, b in zip(norm_tokens, norm_tokens[1:]))
    return grams


class IdfTable:
    """Sentence-level document frequencies with idf = ln(1 + N/df).

    Built once over the corpus at index time and persisted with the index so
    query encoding stays reproducible. N-grams unseen at build time have no
    idf and are dropped from sparse vectors (they can never match an indexed
    sentence anyway).
    """

    def __init__(self, df: Mapping[str, int] | None = None, n_sentences: int = 0):
        self.df: dict[str, int] = dict(df or {})
        self.n_sentences = int(n_sentences)

    @classmethod
    def build(cls, corpus: Corpus) -> "IdfTable":
        df: dict[str, int] = {}
        n = 0
        for doc in corpus:
            for sent in corpus.sentences(doc.doc_id):
                n += 1
                toks = [norm_token(t) for t in tokenize(corpus.sentence_text(sent))]
                for gram in set(ngrams(toks)):
                    df[gram] = df.get(gram, 0) + 1
        return cls(df, n)

    def idf(self, gram: str) -> float | None:
        d = self.df.get(gram)
        if not d:
            return None
        return math.log(1.0 + self.n_sentences / d)

    def to_dict(self) -> dict:
        return {"n_sentences": self.n_sentences, "df": self.df}

    @classmethod
    def from_dict(cls, raw: Mapping) -> "IdfTable":
        return cls(raw["df"], raw["n_sentences"])


class Encoder:
    """Stateless-after-construction encoder pairing dense and sparse representations."""

    def __init__(self, cfg: EncoderConfig, idf: IdfTable):
        self.cfg = cfg
        self.idf = idf
        self._token_cache: dict[str, np.ndarray] = {}

    def token_vector(self, norm_tok: str) -> np.ndarray:
        v = self._token_cache.get(norm_tok)
        if v is None:
            v = hash_token_vector(norm_tok, self.cfg.dense_dim, self.cfg.seed)
            self._token_cache[norm_tok] = v
        return v

    def sparse_of_tokens(self, norm_tokens: list[str]) -> SparseVector:
        """tf-idf weighted unigram+bigram buckets; colliding buckets sum."""
        tf: dict[str, int] = {}
        for gram in ngrams(norm_tokens):
            tf[gram] = tf.get(gram, 0) + 1
        buckets: dict[int, float] = {}
        for gram, count in tf.items():
            w = self.idf.idf(gram)
            if w is None:
                continue
            tid = hash_term_id(gram, self.cfg.sparse_dim)
            buckets[tid] = buckets.get(tid, 0.0) + count * w
        ids = sorted(buckets)
        return SparseVector(
            np.array(ids, dtype=np.int64),
            np.array([buckets[t] for t in ids], dtype=np.float64),
        )

    def _dense_sum(self, norm_tokens: list[str]) -> np.ndarray:
        acc = np.zeros(self.cfg.dense_dim, dtype=np.float64)
        for tok in norm_tokens:
            acc += self.token_vector(tok)
        return acc

    @staticmethod
    def _normalized(acc: np.ndarray) -> np.ndarray:
        norm = float(np.linalg.norm(acc))
        if norm == 0.0:
            return np.zeros(acc.shape[0], dtype=np.float32)
        return (acc / norm).astype(np.float32)

    def encode_phrase(self, doc: Document, cand: PhraseCandidate) -> PhraseVector:
        """Dense: phrase token vectors plus context_weight times the rest of the
        sentence, normalized. Sparse: the containing sentence's tf-idf n-grams
        (identical for every candidate of the sentence)."""
        sent_tokens = self._sentence_tokens(doc, cand)
        return self.encode_phrase_with_tokens(cand, sent_tokens)

    def encode_phrase_with_tokens(self, cand: PhraseCandidate, sent_tokens: list[Token]) -> PhraseVector:
        norm_tokens = [norm_token(t) for t in sent_tokens]
        i, j = cand.token_span
        dense = self._phrase_dense(norm_tokens, i, j)
        return PhraseVector(dense=dense, sparse=self.sparse_of_tokens(norm_tokens))

    def _phrase_dense(self, norm_tokens: list[str], i: int, j: int) -> np.ndarray:
        span_sum = self._dense_sum(norm_tokens[i:j])
        ctx_sum = self._dense_sum(norm_tokens[:i] + norm_tokens[j:])
        return self._normalized(span_sum + self.cfg.context_weight * ctx_sum)

    def _sentence_tokens(self, doc: Document, cand: PhraseCandidate) -> list[Token]:
        if cand.doc_id != doc.doc_id:
            raise EncodingError(f"candidate doc_id {cand.doc_id!r} does not match document {doc.doc_id!r}")
        from .corpus import segment_sentences

        spans = segment_sentences(doc.abstract)
        if not 0 <= cand.sent_index < len(spans):
            raise EncodingError(f"candidate sent_index {cand.sent_index} out of range for {doc.doc_id!r}")
        s, e = spans[cand.sent_index]
        tokens = tokenize(doc.abstract[s:e], offset=s)
        i, j = cand.token_span
        if not (0 <= i < j <= len(tokens)):
            raise EncodingError(f"candidate token_span {cand.token_span} out of range for {doc.doc_id!r}")
        return tokens

    def encode_query(self, text: str) -> QueryVector:
        """Dense: normalized sum of non-stopword token vectors (all tokens if
        everything is a stopword). Sparse: tf-idf n-grams of the full query."""
        norm_tokens = [norm_token(t) for t in tokenize(text)]
        content = [t for t in norm_tokens if t not in STOPWORDS] or norm_tokens
        dense = self._normalized(self._dense_sum(content))
        return QueryVector(dense=dense, sparse=self.sparse_of_tokens(norm_tokens), raw_text=text)


def export_vectors(path: str | Path, items: Iterable[tuple[PhraseCandidate, PhraseVector]]) -> None:
    """Write the line-delimited vector exchange format."""
    with open(path, "w", encoding="utf-8") as fh:
        for cand, vec in items:
            rec = {
                "doc_id": cand.doc_id,
                "sent_index": cand.sent_index,
                "token_start": cand.token_span[0],
                "token_end": cand.token_span[1],
                "dense": [float(x) for x in vec.dense],
                "sparse": vec.sparse.to_pairs(),
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def import_vectors(path: str | Path, corpus: Corpus) -> dict[PhraseCandidate, PhraseVector]:
    """Read the vector exchange format, resolving each record against the corpus.

    Aborts with the 1-based record index on an unresolvable candidate, a
    dimension mismatch, or a non-finite value.
    """
    out: dict[PhraseCandidate, PhraseVector] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for recno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EncodingError(f"record {recno}: invalid JSON ({exc.msg})") from None
            cand = _resolve_candidate(raw, corpus, recno)
            dense = np.asarray(raw.get("dense", []), dtype=np.float32)
            if dense.ndim != 1 or dense.shape[0] == 0:
                raise EncodingError(f"record {recno}: dense vector missing or not 1-D")
            if dim is None:
                dim = int(dense.shape[0])
            elif dense.shape[0] != dim:
                raise EncodingError(f"record {recno}: dense dim {dense.shape[0]} != {dim}")
            if not np.all(np.isfinite(dense)):
                raise EncodingError(f"record {recno}: non-finite dense value")
            try:
                sparse = SparseVector.from_pairs(raw.get("sparse", []))
            except (TypeError, ValueError, EncodingError) as exc:
                raise EncodingError(f"record {recno}: bad sparse entries ({exc})") from None
            if not np.all(np.isfinite(sparse.weights)):
                raise EncodingError(f"record {recno}: non-finite sparse weight")
            out[cand] = PhraseVector(dense=dense, sparse=sparse)
    return out


def _resolve_candidate(raw: Mapping, corpus: Corpus, recno: int) -> PhraseCandidate:
    doc_id = raw.get("doc_id")
    if not isinstance(doc_id, str) or doc_id not in corpus:
        raise EncodingError(f"record {recno}: unknown doc_id {doc_id!r}")
    doc = corpus.get(doc_id)
    sentences = corpus.sentences(doc_id)
    sent_index = raw.get("sent_index")
    if not isinstance(sent_index, int) or not 0 <= sent_index < len(sentences):
        raise EncodingError(f"record {recno}: sent_index {sent_index!r} out of range for {doc_id!r}")
    sent = sentences[sent_index]
    s, e = sent.char_span
    tokens = tokenize(doc.abstract[s:e], offset=s)
    i, j = raw.get("token_start"), raw.get("token_end")
    if not (isinstance(i, int) and isinstance(j, int) and 0 <= i < j <= len(tokens)):
        raise EncodingError(f"record {recno}: token span [{i!r}, {j!r}) invalid for {doc_id!r}#{sent_index}")
    return PhraseCandidate(
        doc_id=doc_id,
        sent_index=sent_index,
        token_span=(i, j),
        char_span=(tokens[i].start, tokens[j - 1].end),
    )
