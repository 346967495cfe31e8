"""Phrase index: k-means coarse quantization plus dense-first inner-product search.

Posting lists store full vectors (no residual quantization), so scores inside
probed cells are exact and any recall loss comes from coarse probing alone.
Probing with nprobe equal to the number of centroids is guaranteed to match
the exhaustive oracle, list-equal including scores. Centroid probing ranks by
inner product with the query (the search objective); k-means assignment uses
Euclidean distance. Ranking ties break by ascending phrase_id everywhere.
"""

from __future__ import annotations

import hashlib
import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .corpus import Corpus, PhraseCandidate, dump_corpus, load_corpus
from .encoder import Encoder, EncoderConfig, IdfTable, PhraseVector, SparseVector

HEADER_MAGIC = b"PHRASEQA.IDX.v1\n"
POSTINGS_MAGIC = b"PHRASEQA.PST.v1\n"
ENTRIES_FORMAT = "phraseqa-entries"
SPARSE_FORMAT = "phraseqa-sparse"
FORMAT_VERSION = 1


class IndexError_(Exception):
    """Index construction or IO failure."""


@dataclass(frozen=True)
class IndexConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    num_centroids: int = 1024
    kmeans_iters: int = 25
    seed: int = 0
    max_phrase_len: int = 5

    def to_dict(self) -> dict:
        return {
            "encoder": self.encoder.to_dict(),
            "num_centroids": self.num_centroids,
            "kmeans_iters": self.kmeans_iters,
            "seed": self.seed,
            "max_phrase_len": self.max_phrase_len,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "IndexConfig":
        return cls(
            encoder=EncoderConfig.from_dict(raw["encoder"]),
            num_centroids=int(raw["num_centroids"]),
            kmeans_iters=int(raw["kmeans_iters"]),
            seed=int(raw["seed"]),
            max_phrase_len=int(raw["max_phrase_len"]),
        )


@dataclass(frozen=True)
class PhraseEntry:
    phrase_id: int
    cand: PhraseCandidate
    dense: np.ndarray  # float32
    sparse: SparseVector


@dataclass
class SearchStats:
    """Instrumentation for the per-query work bound."""

    inner_products: int = 0
    centroids_scanned: int = 0
    entries_scanned: int = 0

    def reset(self) -> None:
        self.inner_products = 0
        self.centroids_scanned = 0
        self.entries_scanned = 0


def kmeans(
    vectors: Sequence[np.ndarray] | np.ndarray,
    k: int,
    iters: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's k-means with k-means++ seeding; deterministic given the seed.

    Runs at most ``iters`` iterations or until assignments stop changing.
    Empty clusters are repaired by splitting the largest cluster at the point
    farthest from its centroid. Returns (centroids (k, d) float64,
    assignments (n,) int64 by nearest Euclidean centroid).
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        X = np.stack([np.asarray(v, dtype=np.float64) for v in vectors])
    n = X.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds number of vectors n={n}")
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")

    centers = _kmeanspp_seed(X, k, seed)
    assign = None
    for _ in range(iters):
        new_assign = _nearest(X, centers)
        new_assign = _repair_empty(X, centers, new_assign, k)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        centers = _means(X, assign, k, centers)
    # Final assignments must reflect the final centroids.
    assign = _nearest(X, centers)
    return centers, assign


def _kmeanspp_seed(X: np.ndarray, k: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seed))
    n, d = X.shape
    centers = np.empty((k, d), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = X[first]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = float(d2.sum())
        if total > 0.0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # All remaining mass at distance zero (duplicate points).
            idx = int(rng.integers(n))
        centers[c] = X[idx]
        np.minimum(d2, ((X - centers[c]) ** 2).sum(axis=1), out=d2)
    return centers


def _nearest(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # ||x - c||^2 = ||x||^2 - 2 x.c + ||c||^2; the x term is constant per row.
    d2 = (centers**2).sum(axis=1)[None, :] - 2.0 * (X @ centers.T)
    return d2.argmin(axis=1).astype(np.int64)


def _repair_empty(X: np.ndarray, centers: np.ndarray, assign: np.ndarray, k: int) -> np.ndarray:
    counts = np.bincount(assign, minlength=k)
    empties = np.flatnonzero(counts == 0)
    if empties.shape[0] == 0:
        return assign
    assign = assign.copy()
    for e in empties:
        largest = int(counts.argmax())  # ties: lowest cluster id
        members = np.flatnonzero(assign == largest)
        dist = ((X[members] - centers[largest]) ** 2).sum(axis=1)
        mover = int(members[int(dist.argmax())])  # ties: lowest point index
        assign[mover] = int(e)
        counts[largest] -= 1
        counts[e] += 1
    return assign


def _means(X: np.ndarray, assign: np.ndarray, k: int, prev: np.ndarray) -> np.ndarray:
    centers = np.zeros((k, X.shape[1]), dtype=np.float64)
    np.add.at(centers, assign, X)
    counts = np.bincount(assign, minlength=k).astype(np.float64)
    nonzero = counts > 0
    centers[nonzero] /= counts[nonzero, None]
    centers[~nonzero] = prev[~nonzero]
    return centers


class PhraseIndex:
    """Immutable after build; concurrent searches are safe."""

    def __init__(
        self,
        entries: list[PhraseEntry],
        matrix: np.ndarray,
        centroids: np.ndarray,
        postings: list[np.ndarray],
        config: IndexConfig,
        idf: IdfTable,
        index_version: str,
    ):
        self.entries = entries
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        self.centroids = np.ascontiguousarray(centroids, dtype=np.float32)
        self.postings = [np.ascontiguousarray(p, dtype=np.int64) for p in postings]
        self.config = config
        self.idf = idf
        self.index_version = index_version
        self._encoder: Encoder | None = None

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def num_centroids(self) -> int:
        return int(self.centroids.shape[0])

    def __len__(self) -> int:
        return len(self.entries)

    def entry(self, phrase_id: int) -> PhraseEntry:
        return self.entries[phrase_id]

    @property
    def encoder(self) -> Encoder:
        if self._encoder is None:
            self._encoder = Encoder(self.config.encoder, self.idf)
        return self._encoder


def make_entries(pairs: Iterable[tuple[PhraseCandidate, PhraseVector]]) -> list[PhraseEntry]:
    """Assign contiguous phrase_ids in input order."""
    return [
        PhraseEntry(phrase_id=i, cand=cand, dense=vec.dense, sparse=vec.sparse)
        for i, (cand, vec) in enumerate(pairs)
    ]


def build_index(entries: list[PhraseEntry], cfg: IndexConfig, idf: IdfTable) -> PhraseIndex:
    """Cluster entry vectors and bucket them into per-centroid posting lists.

    num_centroids is clamped to the entry count (with a warning) for small
    corpora. Deterministic given entry order and cfg.seed.
    """
    if not entries:
        raise IndexError_("cannot build an index from zero entries")
    dims = {int(e.dense.shape[0]) for e in entries}
    if len(dims) != 1:
        raise IndexError_(f"entries have mixed dense dims: {sorted(dims)}")
    for i, e in enumerate(entries):
        if e.phrase_id != i:
            raise IndexError_(f"phrase_ids must be contiguous from 0; entry {i} has {e.phrase_id}")

    matrix = np.ascontiguousarray(np.stack([e.dense for e in entries]), dtype=np.float32)
    k = cfg.num_centroids
    if k > len(entries):
        warnings.warn(
            f"num_centroids {k} exceeds entry count {len(entries)}; clamping to {len(entries)}",
            stacklevel=2,
        )
        k = len(entries)

    centroids64, assign = kmeans(matrix, k=k, iters=cfg.kmeans_iters, seed=cfg.seed)
    postings = [np.sort(np.flatnonzero(assign == c)).astype(np.int64) for c in range(k)]
    centroids = centroids64.astype(np.float32)
    version = _index_version(cfg, matrix, centroids)
    return PhraseIndex(entries, matrix, centroids, postings, cfg, idf, version)


def _index_version(cfg: IndexConfig, matrix: np.ndarray, centroids: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(cfg.to_dict(), sort_keys=True).encode())
    h.update(struct.pack("<II", matrix.shape[0], matrix.shape[1]))
    h.update(np.ascontiguousarray(matrix, dtype="<f4").tobytes())
    h.update(np.ascontiguousarray(centroids, dtype="<f4").tobytes())
    return h.hexdigest()[:16]


def _rank_top(ids: np.ndarray, scores: np.ndarray, top_n: int) -> list[tuple[int, float]]:
    """Sort by score desc, id asc; return the first top_n pairs."""
    order = np.lexsort((ids, -scores))
    order = order[:top_n]
    return [(int(ids[i]), float(scores[i])) for i in order]


def search_dense(
    index: PhraseIndex,
    q: np.ndarray,
    top_n: int,
    nprobe: int,
    stats: SearchStats | None = None,
) -> list[tuple[int, float]]:
    """Scan the postings of the nprobe centroids with highest inner product to q.

    Returns up to top_n (phrase_id, dense_score) pairs; scores are exact inner
    products over the probed cells.
    """
    q = np.ascontiguousarray(q, dtype=np.float32)
    if q.ndim != 1 or q.shape[0] != index.dim:
        raise IndexError_(f"query dim {q.shape} does not match index dim {index.dim}")
    if not 1 <= nprobe <= index.num_centroids:
        raise IndexError_(f"nprobe must be in [1, {index.num_centroids}], got {nprobe}")
    if top_n < 1:
        raise IndexError_(f"top_n must be >= 1, got {top_n}")

    cscores = kernels.dot_scores(index.centroids, q)
    if stats is not None:
        stats.inner_products += index.num_centroids
        stats.centroids_scanned += index.num_centroids
    corder = np.lexsort((np.arange(index.num_centroids), -cscores))[:nprobe]

    probed = [index.postings[int(c)] for c in corder]
    ids = np.concatenate(probed) if probed else np.empty(0, dtype=np.int64)
    if ids.shape[0] == 0:
        return []
    scores = kernels.gather_dot_scores(index.matrix, ids, q)
    if stats is not None:
        stats.inner_products += int(ids.shape[0])
        stats.entries_scanned += int(ids.shape[0])
    return _rank_top(ids, scores, top_n)


def exact_search(
    entries: PhraseIndex | Sequence[PhraseEntry],
    q: np.ndarray,
    top_n: int,
    stats: SearchStats | None = None,
) -> list[tuple[int, float]]:
    """Full-scan oracle: exact inner products over every entry, same tie-break."""
    if isinstance(entries, PhraseIndex):
        matrix = entries.matrix
        ids = np.arange(len(entries.entries), dtype=np.int64)
    else:
        entries = list(entries)
        if not entries:
            return []
        matrix = np.ascontiguousarray(np.stack([e.dense for e in entries]), dtype=np.float32)
        ids = np.array([e.phrase_id for e in entries], dtype=np.int64)
    q = np.ascontiguousarray(q, dtype=np.float32)
    if q.shape[0] != matrix.shape[1]:
        raise IndexError_(f"query dim {q.shape[0]} does not match entry dim {matrix.shape[1]}")
    scores = kernels.gather_dot_scores(matrix, np.arange(matrix.shape[0], dtype=np.int64), q)
    if stats is not None:
        stats.inner_products += int(matrix.shape[0])
        stats.entries_scanned += int(matrix.shape[0])
    return _rank_top(ids, scores, top_n)


# ---------------------------------------------------------------------------
# Persistence: directory of header.bin / postings.bin / entries.jsonl /
# sparse.jsonl / docs.jsonl, little-endian, magic-versioned.


def save_index(index: PhraseIndex, corpus: Corpus, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    header_json = json.dumps(
        {
            "config": index.config.to_dict(),
            "idf": index.idf.to_dict(),
            "n_entries": len(index.entries),
            "dim": index.dim,
            "num_centroids": index.num_centroids,
            "index_version": index.index_version,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(out / "header.bin", "wb") as fh:
        fh.write(HEADER_MAGIC)
        fh.write(struct.pack("<Q", len(header_json)))
        fh.write(header_json)
        fh.write(struct.pack("<II", index.num_centroids, index.dim))
        fh.write(np.ascontiguousarray(index.centroids, dtype="<f4").tobytes())

    with open(out / "postings.bin", "wb") as fh:
        fh.write(POSTINGS_MAGIC)
        fh.write(struct.pack("<I", index.num_centroids))
        for posting in index.postings:
            fh.write(struct.pack("<I", posting.shape[0]))
            fh.write(np.ascontiguousarray(posting, dtype="<u4").tobytes())
        fh.write(struct.pack("<II", index.matrix.shape[0], index.matrix.shape[1]))
        fh.write(np.ascontiguousarray(index.matrix, dtype="<f4").tobytes())

    with open(out / "entries.jsonl", "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": ENTRIES_FORMAT, "version": FORMAT_VERSION}) + "\n")
        for e in index.entries:
            rec = {
                "doc": e.cand.doc_id,
                "sent": e.cand.sent_index,
                "ts": list(e.cand.token_span),
                "cs": list(e.cand.char_span),
            }
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")

    seen: set[tuple[str, int]] = set()
    with open(out / "sparse.jsonl", "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": SPARSE_FORMAT, "version": FORMAT_VERSION}) + "\n")
        for e in index.entries:
            key = (e.cand.doc_id, e.cand.sent_index)
            if key in seen:
                continue
            seen.add(key)
            rec = {"doc": key[0], "sent": key[1], "terms": e.sparse.to_pairs()}
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")

    dump_corpus(corpus, out / "docs.jsonl")


def load_index(in_dir: str | Path) -> tuple[PhraseIndex, Corpus]:
    src = Path(in_dir)
    with open(src / "header.bin", "rb") as fh:
        magic = fh.read(len(HEADER_MAGIC))
        if magic != HEADER_MAGIC:
            raise IndexError_(f"bad header magic in {src}: {magic!r}")
        (json_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(json_len).decode("utf-8"))
        k, dim = struct.unpack("<II", fh.read(8))
        centroids = np.frombuffer(fh.read(k * dim * 4), dtype="<f4").reshape(k, dim)

    config = IndexConfig.from_dict(header["config"])
    idf = IdfTable.from_dict(header["idf"])

    with open(src / "postings.bin", "rb") as fh:
        magic = fh.read(len(POSTINGS_MAGIC))
        if magic != POSTINGS_MAGIC:
            raise IndexError_(f"bad postings magic in {src}: {magic!r}")
        (k2,) = struct.unpack("<I", fh.read(4))
        if k2 != k:
            raise IndexError_(f"postings centroid count {k2} != header {k}")
        postings = []
        for _ in range(k):
            (cnt,) = struct.unpack("<I", fh.read(4))
            postings.append(np.frombuffer(fh.read(cnt * 4), dtype="<u4").astype(np.int64))
        n, dim2 = struct.unpack("<II", fh.read(8))
        if dim2 != dim:
            raise IndexError_(f"matrix dim {dim2} != header dim {dim}")
        matrix = np.frombuffer(fh.read(n * dim * 4), dtype="<f4").reshape(n, dim)

    corpus = load_corpus(src / "docs.jsonl")

    sparse_by_sent: dict[tuple[str, int], SparseVector] = {}
    with open(src / "sparse.jsonl", encoding="utf-8") as fh:
        head = json.loads(fh.readline())
        if head.get("format") != SPARSE_FORMAT:
            raise IndexError_(f"bad sparse file format: {head!r}")
        for line in fh:
            rec = json.loads(line)
            sparse_by_sent[(rec["doc"], rec["sent"])] = SparseVector.from_pairs(rec["terms"])

    entries: list[PhraseEntry] = []
    with open(src / "entries.jsonl", encoding="utf-8") as fh:
        head = json.loads(fh.readline())
        if head.get("format") != ENTRIES_FORMAT:
            raise IndexError_(f"bad entries file format: {head!r}")
        for i, line in enumerate(fh):
            rec = json.loads(line)
            cand = PhraseCandidate(
                doc_id=rec["doc"],
                sent_index=rec["sent"],
                token_span=tuple(rec["ts"]),
                char_span=tuple(rec["cs"]),
            )
            key = (rec["doc"], rec["sent"])
            entries.append(
                PhraseEntry(phrase_id=i, cand=cand, dense=matrix[i], sparse=sparse_by_sent[key])
            )
    if len(entries) != n:
        raise IndexError_(f"entry count {len(entries)} != matrix rows {n}")

    index = PhraseIndex(entries, matrix, centroids, postings, config, idf, header["index_version"])
    return index, corpus
