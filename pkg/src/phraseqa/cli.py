"""Command-line entry points: index, ask, serve, eval, ir-eval."""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import sys

from .config import ConfigError, Settings, load_settings
from .corpus import CorpusError, filter_recent, load_corpus
from .entity import EntityError, load_entity_dictionary
from .evaluation import (
    EvalError,
    evaluate_qa,
    format_ir_report,
    format_qa_report,
    ir_metrics,
    load_dataset,
    load_qrels,
    load_run,
)
from .service import QueryError, build_engine, create_app, load_engine, save_engine

logger = logging.getLogger("phraseqa")


def _settings_from_args(args: argparse.Namespace) -> Settings:
    overrides = {}
    for name in (
        "seed",
        "num_centroids",
        "nprobe",
        "answers_k",
        "sparse_weight",
        "max_phrase_len",
        "host",
        "port",
    ):
        if hasattr(args, name) and getattr(args, name) is not None:
            overrides[name] = getattr(args, name)
    return load_settings(getattr(args, "config", None), **overrides)


def cmd_index(args: argparse.Namespace) -> int:
    settings = _settings_from_args(args)
    corpus = load_corpus(args.corpus, on_error=settings.corpus_on_error)
    if args.recent_after:
        cutoff = datetime.date.fromisoformat(args.recent_after)
        before = len(corpus)
        corpus = filter_recent(corpus, cutoff)
        logger.info("kept %d/%d documents dated after %s", len(corpus), before, cutoff)
    dictionary = load_entity_dictionary(args.dict) if args.dict else None
    logger.info("building index over %d documents", len(corpus))
    engine = build_engine(corpus, settings, dictionary)
    save_engine(engine, args.out, dictionary)
    print(
        json.dumps(
            {
                "documents": len(corpus),
                "phrases": len(engine.index),
                "centroids": engine.index.num_centroids,
                "index_version": engine.index.index_version,
                "out": str(args.out),
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_ask(args: argparse.Namespace) -> int:
    settings = _settings_from_args(args)
    engine = load_engine(args.index, settings)
    try:
        resp = engine.ask(args.question, k=args.k, nprobe=args.nprobe)
    except QueryError as exc:
        print(json.dumps({"error": str(exc), "query": args.question}, sort_keys=True))
        return 2
    if args.json:
        print(resp.to_json())
        return 0
    for i, ans in enumerate(resp.phrase_results, start=1):
        marked = (
            ans.sentence_text[: ans.answer_span[0]]
            + "[" + ans.phrase_text + "]"
            + ans.sentence_text[ans.answer_span[1] :]
        )
        print(f"{i:2d}. ({ans.total:.4f}) {marked}")
        print(f"    {ans.title}" + (f" ({ans.date})" if ans.date else ""))
    if resp.entity_results:
        print("entities:")
        for r in resp.entity_results:
            print(f"  {r.canonical_name} [{r.etype}] cui={r.cui} score={r.score:.4f}")
    print(f"took {resp.timing_ms['total']:.1f} ms")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    settings = _settings_from_args(args)
    engine = load_engine(args.index, settings)
    app = create_app(engine)
    logger.info("serving index %s on %s:%d", engine.index.index_version, settings.host, settings.port)
    uvicorn.run(app, host=settings.host, port=settings.port, log_level="warning")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    settings = _settings_from_args(args)
    engine = load_engine(args.index, settings)
    dataset = load_dataset(args.dataset)
    ks = [int(x) for x in args.ks.split(",") if x.strip()]
    max_k = max(ks)
    report = evaluate_qa(dataset, lambda q: engine.answer_sentences(q, k=max_k), ks=ks)
    if args.json:
        print(json.dumps(report, sort_keys=True))
    else:
        print(format_qa_report(report))
    return 0


def cmd_ir_eval(args: argparse.Namespace) -> int:
    run = load_run(args.run)
    qrels = load_qrels(args.qrels)
    result = ir_metrics(run, qrels, k_p=args.k_p, k_ndcg=args.k_ndcg)
    if args.json:
        print(json.dumps(result, sort_keys=True))
    else:
        print(format_ir_report(result))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phraseqa",
        description="Phrase-indexed question answering over abstracts",
    )
    parser.add_argument("--config", default=None, help="JSON settings file")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build and persist an index")
    p.add_argument("--corpus", required=True, help="corpus JSONL file")
    p.add_argument("--out", required=True, help="output index directory")
    p.add_argument("--recent-after", default=None, metavar="YYYY-MM-DD",
                   help="keep only documents dated strictly after this date")
    p.add_argument("--dict", default=None, help="entity dictionary JSONL file")
    p.add_argument("--num-centroids", type=int, dest="num_centroids")
    p.add_argument("--max-phrase-len", type=int, dest="max_phrase_len")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("ask", help="query a persisted index")
    p.add_argument("--index", required=True, help="index directory")
    p.add_argument("question")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--nprobe", type=int, default=None)
    p.add_argument("--json", action="store_true", help="emit the raw response JSON")
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--index", required=True, help="index directory")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--host", default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("eval", help="sentence-level QA accuracy on a dataset")
    p.add_argument("--index", required=True, help="index directory")
    p.add_argument("--dataset", required=True, help="dataset JSONL file")
    p.add_argument("--ks", default="1,50", help="comma-separated cutoffs")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ir-eval", help="TREC-style metrics for a run against qrels")
    p.add_argument("--run", required=True, help="TREC run file")
    p.add_argument("--qrels", required=True, help="TREC qrels file")
    p.add_argument("--k-p", type=int, default=5, dest="k_p")
    p.add_argument("--k-ndcg", type=int, default=10, dest="k_ndcg")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_ir_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ConfigError, CorpusError, EntityError, EvalError, FileNotFoundError) as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
