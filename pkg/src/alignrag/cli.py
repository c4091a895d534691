"""Command line entry points: index building, retrieval, evaluation."""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

from .baselines_eval import (
    METHODS,
    eval_to_csv,
    eval_to_json,
    load_questions,
    run_eval,
)
from .config import Config, resolve_config
from .corpus import load_corpus
from .errors import AlignragError
from .ngram_index import build_bm25, build_trie, corpus_ngrams, load_index, save_index
from .pipeline import RetrievalEngine


def _load_corpus_checked(path: str, chunk_units: int):
    if not os.path.exists(path):
        raise AlignragError(f"corpus file not found: {path}")
    return load_corpus(path, chunk_units=chunk_units)


def cmd_index_build(args: argparse.Namespace) -> int:
    config = resolve_config(args.config)
    chunk_units = args.chunk_units or config.chunk_units
    corpus = _load_corpus_checked(args.corpus, chunk_units)
    trie = build_trie(corpus_ngrams(corpus.chunks))
    bm25 = build_bm25(corpus.chunks, k1=config.bm25_k1, b=config.bm25_b)
    save_index(args.out, trie, bm25, chunk_units)
    print(f"indexed {len(corpus.objects)} objects")
    print(f"chunks: {len(corpus.chunks)}")
    print(f"ngrams: {len(trie)}")
    print(f"wrote {args.out}")
    return 0


def _build_engine(args: argparse.Namespace, config: Config) -> RetrievalEngine:
    if not os.path.exists(args.index):
        raise AlignragError(f"index file not found: {args.index}")
    trie, bm25, chunk_units = load_index(args.index)
    corpus = _load_corpus_checked(args.corpus, chunk_units)
    return RetrievalEngine(corpus, config=config, trie=trie, bm25=bm25)


def _apply_overrides(config: Config, args: argparse.Namespace) -> Config:
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "jobs", None) is not None:
        config.jobs = args.jobs
    config.validate()
    return config


def cmd_retrieve(args: argparse.Namespace) -> int:
    config = _apply_overrides(resolve_config(args.config), args)
    engine = _build_engine(args, config)
    top_k = args.top_k or config.final_k
    if args.method == "arm":
        result = engine.run_arm(args.question, final_k=top_k)
        retrieved = result.final
        confidence = {e.object_id: e.confidence for e in result.confidence}
        for oid in retrieved:
            print(f"{oid}\t{confidence.get(oid, 0.0):.6f}")
        if args.trace:
            with open(args.trace, "w", encoding="utf-8") as handle:
                handle.write(json.dumps(result.to_trace("q0"), sort_keys=True))
                handle.write("\n")
            print(f"trace written to {args.trace}", file=sys.stderr)
    else:
        from .baselines_eval import Question, build_runner

        runner = build_runner(args.method, engine, top_k)
        retrieved, _, _ = runner(
            Question(question_id="q0", question=args.question, gold_ids=("_",))
        )
        for oid in retrieved:
            print(oid)
    return 0


def cmd_eval_run(args: argparse.Namespace) -> int:
    config = _apply_overrides(resolve_config(args.config), args)
    engine = _build_engine(args, config)
    if not os.path.exists(args.questions):
        raise AlignragError(f"questions file not found: {args.questions}")
    questions = load_questions(args.questions)
    methods = args.method or list(METHODS)
    results = run_eval(
        engine, questions, methods=methods, top_k=args.top_k, jobs=config.jobs
    )
    os.makedirs(args.out, exist_ok=True)
    json_path = os.path.join(args.out, "results.json")
    csv_path = os.path.join(args.out, "results.csv")
    with open(json_path, "w", encoding="utf-8") as handle:
        handle.write(eval_to_json(results))
    with open(csv_path, "w", encoding="utf-8") as handle:
        handle.write(eval_to_csv(results))
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as handle:
            for q in questions:
                result = engine.run_arm(q.question, final_k=args.top_k or config.final_k)
                handle.write(json.dumps(result.to_trace(q.question_id), sort_keys=True))
                handle.write("\n")
    header = (
        f"{'method':<14}{'P':>8}{'R':>8}{'F1':>8}{'PR':>8}"
        f"{'#calls':>8}{'#obj':>8}"
    )
    print(header)
    for name in methods:
        res = results[name]
        print(
            f"{name:<14}{res.precision:>8.3f}{res.recall:>8.3f}{res.f1:>8.3f}"
            f"{res.perfect_recall_pct:>8.1f}{res.avg_llm_calls:>8.2f}"
            f"{res.avg_objects:>8.2f}"
        )
    print(f"wrote {json_path} and {csv_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alignrag",
        description="Aligned retrieval over mixed table/passage collections",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    index = sub.add_parser("index", help="index management")
    index_sub = index.add_subparsers(dest="index_command", required=True)
    build = index_sub.add_parser("build", help="build the lexical index")
    build.add_argument("--corpus", required=True)
    build.add_argument("--out", required=True)
    build.add_argument("--chunk-units", type=int, default=None)
    build.add_argument("--config", default=None)
    build.set_defaults(func=cmd_index_build)

    retrieve = sub.add_parser("retrieve", help="answer one question")
    retrieve.add_argument("question")
    retrieve.add_argument("--corpus", required=True)
    retrieve.add_argument("--index", required=True)
    retrieve.add_argument("--method", choices=METHODS, default="arm")
    retrieve.add_argument("--top-k", type=int, default=None)
    retrieve.add_argument("--trace", default=None)
    retrieve.add_argument("--config", default=None)
    retrieve.add_argument("--seed", type=int, default=None)
    retrieve.set_defaults(func=cmd_retrieve)

    ev = sub.add_parser("eval", help="evaluation harness")
    ev_sub = ev.add_subparsers(dest="eval_command", required=True)
    run = ev_sub.add_parser("run", help="run methods over a question set")
    run.add_argument("--corpus", required=True)
    run.add_argument("--index", required=True)
    run.add_argument("--questions", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--method", action="append", choices=METHODS, default=None)
    run.add_argument("--top-k", type=int, default=None)
    run.add_argument("--trace", default=None)
    run.add_argument("--config", default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--jobs", type=int, default=None)
    run.set_defaults(func=cmd_eval_run)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AlignragError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
