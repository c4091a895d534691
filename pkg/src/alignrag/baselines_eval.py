"""Retrieval baselines, set metrics, and the evaluation harness."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence

from . import prompts
from .corpus import Corpus, serialize_object
from .embedding import EmbeddingProvider, VectorStore, object_similarity
from .errors import EmptyGold, ParseError, UnknownGoldId, ValidationError
from .lm import SEP_TOKEN, TokenScorer, free_decode
from .ngram_index import normalize_tokens
from .pipeline import RetrievalEngine
from .struct_align import overlap_coefficient


def dense_retrieve(
    question: str,
    store: VectorStore,
    provider: EmbeddingProvider,
    corpus: Corpus,
    top_k: int = 5,
) -> list[str]:
    """Rank objects by best-chunk cosine against the question."""
    if top_k < 1:
        raise ValidationError(f"top_k must be >= 1, got {top_k}")
    question_vec = provider.embed(question)
    scored = [
        (
            -object_similarity(store, question_vec, corpus.chunks_by_object[obj.id]),
            obj.id,
        )
        for obj in corpus.objects
    ]
    scored.sort()
    return [oid for _, oid in scored[:top_k]]


class Reranker(Protocol):
    """Scores a question against one serialized object; higher is better."""

    def score(self, question: str, serialized_object: str) -> float: ...


class OverlapReranker:
    """Token-overlap coefficient between question and object text."""

    def score(self, question: str, serialized_object: str) -> float:
        return overlap_coefficient(
            set(normalize_tokens(question)), set(normalize_tokens(serialized_object))
        )


def rerank_retrieve(
    question: str,
    store: VectorStore,
    provider: EmbeddingProvider,
    corpus: Corpus,
    reranker: Reranker,
    pool: int = 50,
    top_k: int = 5,
) -> list[str]:
    """Rescore the dense top pool with the reranker."""
    if pool < top_k:
        raise ValidationError(f"pool {pool} smaller than top_k {top_k}")
    candidates = dense_retrieve(question, store, provider, corpus, top_k=pool)
    scored = [
        (-reranker.score(question, serialize_object(corpus.by_id[oid])), oid)
        for oid in candidates
    ]
    scored.sort()
    return [oid for _, oid in scored[:top_k]]


@dataclass(frozen=True)
class DecompositionResult:
    retrieved: tuple[str, ...]
    subquestions: tuple[str, ...]
    llm_calls: int


def decomposed_retrieve(
    scorer: TokenScorer,
    question: str,
    store: VectorStore,
    provider: EmbeddingProvider,
    corpus: Corpus,
    reranker: Optional[Reranker] = None,
    per_sub: int = 30,
    top_k: int = 5,
    max_subquestions: int = 6,
    template: Optional[str] = None,
) -> DecompositionResult:
    """Decompose, retrieve per sub-question, rescore the union.

    The single decomposition pass is the one model call. Without a
    reranker the union is ranked by its best dense score over any
    sub-question; with one, by reranker score against the original
    question. A decode that yields nothing falls back to the question
    itself as the only sub-question.
    """
    prompt = (template or prompts.DECOMPOSE_TEMPLATE).format(user_question=question)
    tokens, _ = free_decode(scorer, prompt)
    subquestions: list[str] = []
    current: list[str] = []
    for tok in tokens:
        if tok == SEP_TOKEN:
            if current:
                subquestions.append(" ".join(current))
            current = []
        else:
            current.append(tok)
    if current:
        subquestions.append(" ".join(current))
    subquestions = subquestions[:max_subquestions]
    if not subquestions:
        subquestions = [question]

    union: dict[str, float] = {}
    for sub in subquestions:
        sub_vec = provider.embed(sub)
        for oid in dense_retrieve(sub, store, provider, corpus, top_k=per_sub):
            score = object_similarity(
                store, sub_vec, corpus.chunks_by_object[oid]
            )
            if score > union.get(oid, float("-inf")):
                union[oid] = score
    if reranker is not None:
        rescored = {
            oid: reranker.score(question, serialize_object(corpus.by_id[oid]))
            for oid in union
        }
    else:
        rescored = union
    ranked = sorted(rescored.items(), key=lambda item: (-item[1], item[0]))
    return DecompositionResult(
        retrieved=tuple(oid for oid, _ in ranked[:top_k]),
        subquestions=tuple(subquestions),
        llm_calls=1,
    )


@dataclass(frozen=True)
class AgentStep:
    thought: str
    action: str
    argument: str
    observation: str


@dataclass(frozen=True)
class AgentResult:
    retrieved: tuple[str, ...]
    steps: tuple[AgentStep, ...]
    iterations: int
    llm_calls: int
    objects_provided: int
    termination: str  # finish | max_iterations | malformed


SEARCH_ACTION = "search"
FINISH_ACTION = "finish"


def agentic_retrieve(
    scorer: TokenScorer,
    question: str,
    store: VectorStore,
    provider: EmbeddingProvider,
    corpus: Corpus,
    max_iterations: int = 8,
    per_search: int = 5,
    template: Optional[str] = None,
) -> AgentResult:
    """Thought / search / finish loop over dense lookups.

    Each iteration is one model call; accounting reports calls as
    iterations minus one. A generation with no recognizable action is
    counted and ends the loop.
    """
    if max_iterations < 1:
        raise ValidationError(f"max_iterations must be >= 1, got {max_iterations}")
    tmpl = template or prompts.REACT_TEMPLATE
    history = ""
    seen: list[str] = []
    steps: list[AgentStep] = []
    provided = 0
    iterations = 0
    termination = "max_iterations"
    while iterations < max_iterations:
        iterations += 1
        prompt = tmpl.format(user_question=question, history=history)
        tokens, _ = free_decode(scorer, prompt)
        action_pos = next(
            (
                i
                for i, tok in enumerate(tokens)
                if tok in (SEARCH_ACTION, FINISH_ACTION)
            ),
            None,
        )
        if action_pos is None:
            steps.append(
                AgentStep(
                    thought=" ".join(tokens),
                    action="malformed",
                    argument="",
                    observation="",
                )
            )
            termination = "malformed"
            break
        thought = " ".join(tokens[:action_pos])
        action = tokens[action_pos]
        argument = " ".join(tokens[action_pos + 1 :])
        if action == FINISH_ACTION:
            steps.append(
                AgentStep(
                    thought=thought, action=action, argument=argument, observation=""
                )
            )
            termination = "finish"
            break
        ids = dense_retrieve(
            argument or question, store, provider, corpus, top_k=per_search
        )
        provided += len(ids)
        for oid in ids:
            if oid not in seen:
                seen.append(oid)
        observation = " ".join(ids)
        steps.append(
            AgentStep(
                thought=thought,
                action=action,
                argument=argument,
                observation=observation,
            )
        )
        history += (
            f" thought: {thought} action: {action} {argument} "
            f"observation: {observation}"
        )
    return AgentResult(
        retrieved=tuple(seen),
        steps=tuple(steps),
        iterations=iterations,
        llm_calls=iterations - 1,
        objects_provided=provided,
        termination=termination,
    )


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    perfect_recall: bool


def compute_metrics(retrieved: Sequence[str], gold: Sequence[str]) -> Metrics:
    """Set precision/recall/F1 plus the all-gold-found indicator.

    Duplicate retrievals collapse into a set before scoring.
    """
    gold_set = set(gold)
    if not gold_set:
        raise EmptyGold("gold set is empty")
    retrieved_set = set(retrieved)
    hits = len(retrieved_set & gold_set)
    precision = hits / len(retrieved_set) if retrieved_set else 0.0
    recall = hits / len(gold_set)
    f1 = (
        0.0
        if precision + recall == 0.0
        else 2.0 * precision * recall / (precision + recall)
    )
    return Metrics(
        precision=precision,
        recall=recall,
        f1=f1,
        perfect_recall=gold_set <= retrieved_set,
    )


@dataclass(frozen=True)
class Question:
    question_id: str
    question: str
    gold_ids: tuple[str, ...]


def load_questions(path: str) -> list[Question]:
    questions = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {line_no}: {exc.msg}") from exc
            try:
                questions.append(
                    Question(
                        question_id=str(record["question_id"]),
                        question=str(record["question"]),
                        gold_ids=tuple(str(g) for g in record["gold_object_ids"]),
                    )
                )
            except KeyError as exc:
                raise ParseError(f"line {line_no}: missing field {exc}") from exc
    return questions


@dataclass(frozen=True)
class QuestionRow:
    question_id: str
    retrieved: tuple[str, ...]
    precision: float
    recall: float
    f1: float
    perfect_recall: bool
    llm_calls: int
    objects_provided: int


@dataclass(frozen=True)
class EvalResult:
    method: str
    rows: tuple[QuestionRow, ...]
    precision: float
    recall: float
    f1: float
    perfect_recall_pct: float
    avg_llm_calls: float
    avg_objects: float


METHODS = ("dense", "rerank", "dense-decomp", "rerank-decomp", "react", "arm")

# retrieved ids, llm calls, objects provided
MethodRunner = Callable[[Question], tuple[list[str], int, int]]


def build_runner(method: str, engine: RetrievalEngine, top_k: int) -> MethodRunner:
    cfg = engine.config
    common = (engine.store, engine.provider, engine.corpus)
    if method == "dense":
        def run_dense(q: Question) -> tuple[list[str], int, int]:
            ids = dense_retrieve(q.question, *common, top_k=top_k)
            return ids, 0, len(ids)

        return run_dense
    if method == "rerank":
        def run_rerank(q: Question) -> tuple[list[str], int, int]:
            pool = min(cfg.rerank_pool, len(engine.corpus.objects))
            pool = max(pool, top_k)
            ids = rerank_retrieve(
                q.question, *common, OverlapReranker(), pool=pool, top_k=top_k
            )
            return ids, 0, len(ids)

        return run_rerank
    if method in ("dense-decomp", "rerank-decomp"):
        reranker = OverlapReranker() if method == "rerank-decomp" else None

        def run_decomp(q: Question) -> tuple[list[str], int, int]:
            result = decomposed_retrieve(
                engine.scorer,
                q.question,
                *common,
                reranker=reranker,
                per_sub=cfg.per_sub,
                top_k=top_k,
                max_subquestions=cfg.max_subquestions,
                template=engine.templates["decompose"],
            )
            return list(result.retrieved), result.llm_calls, len(result.retrieved)

        return run_decomp
    if method == "react":
        def run_react(q: Question) -> tuple[list[str], int, int]:
            result = agentic_retrieve(
                engine.scorer,
                q.question,
                *common,
                max_iterations=cfg.max_iterations,
                per_search=cfg.per_search,
                template=engine.templates["react"],
            )
            return list(result.retrieved), result.llm_calls, result.objects_provided

        return run_react
    if method == "arm":
        def run_arm(q: Question) -> tuple[list[str], int, int]:
            result = engine.run_arm(q.question, final_k=top_k)
            return list(result.final), result.llm_calls, len(result.final)

        return run_arm
    raise ValidationError(f"unknown method {method!r}")


def run_eval(
    engine: RetrievalEngine,
    questions: Sequence[Question],
    methods: Sequence[str] = METHODS,
    top_k: Optional[int] = None,
    jobs: int = 1,
) -> dict[str, EvalResult]:
    """Score each method over the question set; macro-averaged summary."""
    if not questions:
        raise ValidationError("no questions to evaluate")
    known = set(engine.corpus.by_id)
    for q in questions:
        if not q.gold_ids:
            raise EmptyGold(f"question {q.question_id!r} has no gold objects")
        missing = [g for g in q.gold_ids if g not in known]
        if missing:
            raise UnknownGoldId(
                f"question {q.question_id!r}: unknown gold ids {missing}"
            )
    k = top_k if top_k is not None else engine.config.final_k
    results: dict[str, EvalResult] = {}
    for method in methods:
        runner = build_runner(method, engine, k)

        def score_one(q: Question) -> QuestionRow:
            retrieved, llm_calls, provided = runner(q)
            metrics = compute_metrics(retrieved, q.gold_ids)
            return QuestionRow(
                question_id=q.question_id,
                retrieved=tuple(retrieved),
                precision=metrics.precision,
                recall=metrics.recall,
                f1=metrics.f1,
                perfect_recall=metrics.perfect_recall,
                llm_calls=llm_calls,
                objects_provided=provided,
            )

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                rows = tuple(pool.map(score_one, questions))
        else:
            rows = tuple(score_one(q) for q in questions)
        n = len(rows)
        results[method] = EvalResult(
            method=method,
            rows=rows,
            precision=sum(r.precision for r in rows) / n,
            recall=sum(r.recall for r in rows) / n,
            f1=sum(r.f1 for r in rows) / n,
            perfect_recall_pct=100.0 * sum(r.perfect_recall for r in rows) / n,
            avg_llm_calls=sum(r.llm_calls for r in rows) / n,
            avg_objects=sum(r.objects_provided for r in rows) / n,
        )
    return results


def eval_to_json(results: dict[str, EvalResult]) -> str:
    payload = {
        "version": 1,
        "methods": {
            name: {
                "precision": res.precision,
                "recall": res.recall,
                "f1": res.f1,
                "perfect_recall_pct": res.perfect_recall_pct,
                "avg_llm_calls": res.avg_llm_calls,
                "avg_objects": res.avg_objects,
                "rows": [
                    {
                        "question_id": row.question_id,
                        "retrieved": list(row.retrieved),
                        "precision": row.precision,
                        "recall": row.recall,
                        "f1": row.f1,
                        "perfect_recall": row.perfect_recall,
                        "llm_calls": row.llm_calls,
                        "objects_provided": row.objects_provided,
                    }
                    for row in res.rows
                ],
            }
            for name, res in sorted(results.items())
        },
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def eval_to_csv(results: dict[str, EvalResult]) -> str:
    lines = ["method,precision,recall,f1,perfect_recall_pct,avg_llm_calls,avg_objects"]
    for name, res in sorted(results.items()):
        lines.append(
            f"{name},{res.precision:.6f},{res.recall:.6f},{res.f1:.6f},"
            f"{res.perfect_recall_pct:.6f},{res.avg_llm_calls:.6f},"
            f"{res.avg_objects:.6f}"
        )
    return "\n".join(lines) + "\n"
