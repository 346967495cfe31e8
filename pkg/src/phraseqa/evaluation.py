"""Sentence-level QA accuracy, latency reporting, and TREC-style IR metrics.

EM_sent(answer sentence, golds) is 1 iff any normalized gold string occurs as
a substring of the normalized sentence. Normalization lowercases, replaces
every Unicode punctuation character with a space, and collapses whitespace,
applied identically to both sides. Punctuation maps to a space rather than
nothing so hyphenated and punctuated variants ("COVID-19", "14  DAYS.") match
their spaced forms.
"""

from __future__ import annotations

import json
import math
import time
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

QTYPES = ("interrogative", "keyword")


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class EvalExample:
    question: str
    answers: tuple[str, ...]
    qtype: str
    source: str


@dataclass(frozen=True)
class QRel:
    topic_id: str
    doc_id: str
    grade: int


@dataclass(frozen=True)
class RunEntry:
    topic_id: str
    doc_id: str
    rank: int
    score: float


def normalize_answer(text: str) -> str:
    out = []
    for ch in text.lower():
        out.append(" " if unicodedata.category(ch).startswith("P") else ch)
    return " ".join("".join(out).split())


def em_sent(sentence: str, golds: Sequence[str]) -> int:
    sent_norm = normalize_answer(sentence)
    for gold in golds:
        g = normalize_answer(gold)
        if g and g in sent_norm:
            return 1
    return 0


def em_sent_at_k(sentences: Sequence[str], golds: Sequence[str], k: int) -> int:
    if k < 1:
        raise EvalError(f"k must be >= 1, got {k}")
    for sentence in sentences[:k]:
        if em_sent(sentence, golds):
            return 1
    return 0


def _answer_sentence(answer) -> str:
    if isinstance(answer, str):
        return answer
    return answer.sentence_text


def evaluate_qa(
    dataset: Sequence[EvalExample],
    system: Callable[[str], Sequence],
    ks: Sequence[int] = (1, 50),
) -> dict:
    """Run every question through `system` and aggregate EM_sent@k and s/Q.

    `system` returns a ranked list of answers (objects with .sentence_text, or
    plain sentence strings). Splits are reported by question type and source.
    """
    ks = sorted(set(int(k) for k in ks))
    if not ks or ks[0] < 1:
        raise EvalError(f"ks must be positive integers, got {ks}")

    per_example: list[dict] = []
    total_seconds = 0.0
    for ex in dataset:
        t0 = time.perf_counter()
        answers = system(ex.question)
        total_seconds += time.perf_counter() - t0
        sentences = [_answer_sentence(a) for a in answers]
        per_example.append(
            {
                "qtype": ex.qtype,
                "source": ex.source,
                "hits": {k: em_sent_at_k(sentences, ex.answers, k) for k in ks},
            }
        )

    def aggregate(rows: list[dict]) -> dict:
        agg: dict = {"count": len(rows)}
        for k in ks:
            key = f"em_sent@{k}"
            agg[key] = (sum(r["hits"][k] for r in rows) / len(rows)) if rows else None
        return agg

    by_type = {}
    for qtype in sorted({r["qtype"] for r in per_example}):
        by_type[qtype] = aggregate([r for r in per_example if r["qtype"] == qtype])
    by_source = {}
    for source in sorted({r["source"] for r in per_example}):
        by_source[source] = aggregate([r for r in per_example if r["source"] == source])

    report = aggregate(per_example)
    report["by_type"] = by_type
    report["by_source"] = by_source
    report["seconds_per_query"] = (total_seconds / len(dataset)) if dataset else None
    report["ks"] = ks
    return report


def format_qa_report(report: dict) -> str:
    ks = report["ks"]
    lines = [f"questions: {report['count']}"]
    spq = report["seconds_per_query"]
    lines.append(f"s/Q: {spq:.4f}" if spq is not None else "s/Q: n/a")

    def fmt(label: str, agg: dict) -> str:
        cells = "  ".join(
            f"em_sent@{k}={agg[f'em_sent@{k}']:.4f}" if agg[f"em_sent@{k}"] is not None else f"em_sent@{k}=n/a"
            for k in ks
        )
        return f"{label:<24} n={agg['count']:<5} {cells}"

    lines.append(fmt("overall", report))
    for qtype, agg in report["by_type"].items():
        lines.append(fmt(f"type/{qtype}", agg))
    for source, agg in report["by_source"].items():
        lines.append(fmt(f"source/{source}", agg))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# IR metrics over TREC-format runs and qrels.

METRICS = ("p_at_k", "ndcg_at_k", "map", "bpref")


def ir_metrics(
    run: Sequence[RunEntry],
    qrels: Sequence[QRel],
    k_p: int = 5,
    k_ndcg: int = 10,
) -> dict:
    """Per-topic and mean P@k_p, NDCG@k_ndcg, MAP, Bpref.

    Topics are taken from the qrels. A topic with no relevant documents is
    undefined (None everywhere) and excluded from the means; a topic absent
    from the run scores zero. Unjudged retrieved documents count as
    non-relevant for P/NDCG/MAP and are skipped entirely by Bpref.
    """
    judged: dict[str, dict[str, int]] = {}
    for qr in qrels:
        per = judged.setdefault(qr.topic_id, {})
        if qr.doc_id in per:
            raise EvalError(f"duplicate qrel for topic {qr.topic_id} doc {qr.doc_id}")
        per[qr.doc_id] = qr.grade

    by_topic: dict[str, list[RunEntry]] = {}
    for entry in run:
        by_topic.setdefault(entry.topic_id, []).append(entry)
    for topic, entries in by_topic.items():
        entries.sort(key=lambda e: e.rank)
        ranks = [e.rank for e in entries]
        if len(set(ranks)) != len(ranks):
            raise EvalError(f"duplicate ranks in run for topic {topic}")

    per_topic: dict[str, dict[str, float | None]] = {}
    for topic in sorted(judged):
        grades = judged[topic]
        n_rel = sum(1 for g in grades.values() if g > 0)
        if n_rel == 0:
            per_topic[topic] = {m: None for m in METRICS}
            continue
        ranking = [e.doc_id for e in by_topic.get(topic, [])]
        per_topic[topic] = {
            "p_at_k": _precision_at(ranking, grades, k_p),
            "ndcg_at_k": _ndcg_at(ranking, grades, k_ndcg),
            "map": _average_precision(ranking, grades, n_rel),
            "bpref": _bpref(ranking, grades, n_rel),
        }

    means: dict[str, float | None] = {}
    defined = [t for t in per_topic if per_topic[t]["map"] is not None]
    for m in METRICS:
        means[m] = (sum(per_topic[t][m] for t in defined) / len(defined)) if defined else None
    return {
        "k_p": k_p,
        "k_ndcg": k_ndcg,
        "topics": per_topic,
        "means": means,
        "num_topics": len(per_topic),
        "num_defined": len(defined),
    }


def _precision_at(ranking: list[str], grades: dict[str, int], k: int) -> float:
    hits = sum(1 for doc in ranking[:k] if grades.get(doc, 0) > 0)
    return hits / k


def _ndcg_at(ranking: list[str], grades: dict[str, int], k: int) -> float:
    dcg = 0.0
    for i, doc in enumerate(ranking[:k], start=1):
        dcg += grades.get(doc, 0) / math.log2(i + 1)
    ideal = sorted(grades.values(), reverse=True)[:k]
    idcg = sum(g / math.log2(i + 1) for i, g in enumerate(ideal, start=1))
    return dcg / idcg if idcg > 0 else 0.0


def _average_precision(ranking: list[str], grades: dict[str, int], n_rel: int) -> float:
    hits = 0
    total = 0.0
    for i, doc in enumerate(ranking, start=1):
        if grades.get(doc, 0) > 0:
            hits += 1
            total += hits / i
    return total / n_rel


def _bpref(ranking: list[str], grades: dict[str, int], n_rel: int) -> float:
    n_nonrel = sum(1 for g in grades.values() if g <= 0)
    denom = min(n_rel, n_nonrel)
    total = 0.0
    nonrel_above = 0
    for doc in ranking:
        if doc not in grades:
            continue  # unjudged: invisible to bpref
        if grades[doc] > 0:
            if denom > 0:
                total += 1.0 - min(nonrel_above, denom) / denom
            else:
                total += 1.0  # no judged non-relevant docs at all
        else:
            nonrel_above += 1
    return total / n_rel


# ---------------------------------------------------------------------------
# File formats.


def load_dataset(path: str | Path) -> list[EvalExample]:
    out: list[EvalExample] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EvalError(f"line {lineno}: not valid JSON: {exc}")
            try:
                question = str(rec["question"])
                answers = tuple(str(a) for a in rec["answers"])
                qtype = str(rec["type"])
                source = str(rec["source"])
            except KeyError as exc:
                raise EvalError(f"line {lineno}: missing field {exc}")
            if not answers:
                raise EvalError(f"line {lineno}: empty answers list")
            if qtype not in QTYPES:
                raise EvalError(f"line {lineno}: type must be one of {QTYPES}, got {qtype!r}")
            out.append(EvalExample(question=question, answers=answers, qtype=qtype, source=source))
    return out


def dump_dataset(dataset: Iterable[EvalExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in dataset:
            rec = {
                "question": ex.question,
                "answers": list(ex.answers),
                "type": ex.qtype,
                "source": ex.source,
            }
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def load_run(path: str | Path) -> list[RunEntry]:
    """TREC run format: `topic Q0 docid rank score tag`, whitespace-delimited."""
    out: list[RunEntry] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise EvalError(f"line {lineno}: expected 6 fields, got {len(parts)}")
            topic, _q0, doc_id, rank, score, _tag = parts
            try:
                out.append(RunEntry(topic_id=topic, doc_id=doc_id, rank=int(rank), score=float(score)))
            except ValueError as exc:
                raise EvalError(f"line {lineno}: {exc}")
    _check_run(out)
    return out


def _check_run(run: list[RunEntry]) -> None:
    by_topic: dict[str, list[RunEntry]] = {}
    for e in run:
        by_topic.setdefault(e.topic_id, []).append(e)
    for topic, entries in by_topic.items():
        entries = sorted(entries, key=lambda e: e.rank)
        seen_docs = set()
        for a, b in zip(entries, entries[1:]):
            if a.rank == b.rank:
                raise EvalError(f"topic {topic}: duplicate rank {a.rank}")
            if a.score < b.score:
                raise EvalError(
                    f"topic {topic}: score increases with rank ({a.score} < {b.score})"
                )
        for e in entries:
            if e.doc_id in seen_docs:
                raise EvalError(f"topic {topic}: duplicate doc {e.doc_id}")
            seen_docs.add(e.doc_id)


def dump_run(run: Iterable[RunEntry], path: str | Path, tag: str = "phraseqa") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in sorted(run, key=lambda e: (e.topic_id, e.rank)):
            fh.write(f"{e.topic_id} Q0 {e.doc_id} {e.rank} {e.score:.6f} {tag}\n")


def load_qrels(path: str | Path) -> list[QRel]:
    """TREC qrels format: `topic 0 docid grade`, whitespace-delimited."""
    out: list[QRel] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise EvalError(f"line {lineno}: expected 4 fields, got {len(parts)}")
            topic, _zero, doc_id, grade = parts
            try:
                g = int(grade)
            except ValueError as exc:
                raise EvalError(f"line {lineno}: {exc}")
            if g < 0:
                raise EvalError(f"line {lineno}: negative grade {g}")
            out.append(QRel(topic_id=topic, doc_id=doc_id, grade=g))
    return out


def format_ir_report(result: dict) -> str:
    lines = [
        f"topics: {result['num_topics']} ({result['num_defined']} with relevant docs)",
        f"{'topic':<12} {'P@' + str(result['k_p']):>8} {'NDCG@' + str(result['k_ndcg']):>8} "
        f"{'MAP':>8} {'Bpref':>8}",
    ]

    def cell(v: float | None) -> str:
        return f"{v:.4f}" if v is not None else "n/a"

    for topic in sorted(result["topics"]):
        row = result["topics"][topic]
        lines.append(
            f"{topic:<12} {cell(row['p_at_k']):>8} {cell(row['ndcg_at_k']):>8} "
            f"{cell(row['map']):>8} {cell(row['bpref']):>8}"
        )
    m = result["means"]
    lines.append(
        f"{'mean':<12} {cell(m['p_at_k']):>8} {cell(m['ndcg_at_k']):>8} "
        f"{cell(m['map']):>8} {cell(m['bpref']):>8}"
    )
    return "\n".join(lines)
