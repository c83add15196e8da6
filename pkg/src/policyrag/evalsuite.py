"""Retrieval and generation metrics.

Retrieval: MRR, Recall@k, and MAP@k over a run (per-query rankings)
scored against qrels (per-query relevant chunk ids). A query whose
relevant chunks all fall outside its ranking contributes 0 rather than
being excluded.

Generation: faithfulness (fraction of answer claims supported by the
retrieved context), answer relevancy, and answer accuracy. All three go
through a judge interface; the deterministic mock judge used in tests
splits answers into sentences and checks case-insensitive containment,
while the LLM judge drives a chat backend with fixed prompt templates.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

from .encoder import tokenize
from .records import read_records, write_records


class EvalError(ValueError):
    """Raised for bad metric inputs or judge failures."""


@dataclass(frozen=True)
class Qrels:
    """query_id -> set of relevant chunk ids."""

    relevant: dict[str, frozenset[str]]

    def __post_init__(self) -> None:
        for query_id, chunk_ids in self.relevant.items():
            if not chunk_ids:
                raise EvalError(f"query {query_id!r} has no relevant chunks")

    def for_query(self, query_id: str) -> frozenset[str]:
        try:
            return self.relevant[query_id]
        except KeyError:
            raise EvalError(f"query {query_id!r} missing from qrels") from None


@dataclass(frozen=True)
class RetrievalRun:
    """query_id -> ranked chunk ids (no duplicates within a ranking)."""

    rankings: dict[str, tuple[str, ...]]

    def __post_init__(self) -> None:
        for query_id, ranking in self.rankings.items():
            if len(set(ranking)) != len(ranking):
                raise EvalError(f"ranking for {query_id!r} contains duplicates")


def reciprocal_rank(ranking: Sequence[str], relevant: frozenset[str]) -> float:
    for position, chunk_id in enumerate(ranking, start=1):
        if chunk_id in relevant:
            return 1.0 / position
    return 0.0


def recall(ranking: Sequence[str], relevant: frozenset[str], k: int) -> float:
    return len(relevant.intersection(ranking[:k])) / len(relevant)


def average_precision(ranking: Sequence[str], relevant: frozenset[str], k: int) -> float:
    """AP@k normalized by min(|relevant|, k) so it stays in [0, 1]."""
    hits = 0
    precision_sum = 0.0
    for position, chunk_id in enumerate(ranking[:k], start=1):
        if chunk_id in relevant:
            hits += 1
            precision_sum += hits / position
    return precision_sum / min(len(relevant), k)


def _per_query(run: RetrievalRun, qrels: Qrels):
    for query_id, ranking in run.rankings.items():
        yield query_id, ranking, qrels.for_query(query_id)


def mrr(run: RetrievalRun, qrels: Qrels) -> float:
    values = [reciprocal_rank(r, rel) for _, r, rel in _per_query(run, qrels)]
    if not values:
        raise EvalError("empty run")
    return sum(values) / len(values)


def recall_at_k(run: RetrievalRun, qrels: Qrels, k: int) -> float:
    if k < 1:
        raise EvalError(f"k must be >= 1, got {k}")
    values = [recall(r, rel, k) for _, r, rel in _per_query(run, qrels)]
    if not values:
        raise EvalError("empty run")
    return sum(values) / len(values)


def map_at_k(run: RetrievalRun, qrels: Qrels, k: int) -> float:
    if k < 1:
        raise EvalError(f"k must be >= 1, got {k}")
    values = [average_precision(r, rel, k) for _, r, rel in _per_query(run, qrels)]
    if not values:
        raise EvalError("empty run")
    return sum(values) / len(values)


@dataclass(frozen=True)
class EvalReport:
    mrr: float
    recall_at: dict[int, float]
    map_at: dict[int, float]
    per_query: dict[str, dict[str, float]] = field(default_factory=dict)
    faithfulness: float | None = None
    relevancy: float | None = None
    accuracy: float | None = None

    def to_dict(self) -> dict:
        out: dict = {
            "mrr": self.mrr,
            "recall_at": {str(k): v for k, v in self.recall_at.items()},
            "map_at": {str(k): v for k, v in self.map_at.items()},
            "per_query": self.per_query,
        }
        for name in ("faithfulness", "relevancy", "accuracy"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out


def evaluate_run(
    run: RetrievalRun, qrels: Qrels, ks: Sequence[int] = (5, 10, 20)
) -> EvalReport:
    per_query: dict[str, dict[str, float]] = {}
    for query_id, ranking, relevant in _per_query(run, qrels):
        row = {"rr": reciprocal_rank(ranking, relevant)}
        for k in ks:
            row[f"recall@{k}"] = recall(ranking, relevant, k)
            row[f"map@{k}"] = average_precision(ranking, relevant, k)
        per_query[query_id] = row
    return EvalReport(
        mrr=mrr(run, qrels),
        recall_at={k: recall_at_k(run, qrels, k) for k in ks},
        map_at={k: map_at_k(run, qrels, k) for k in ks},
        per_query=per_query,
    )


def render_report(report: EvalReport) -> str:
    """Fixed-width text table with the retrieval columns plus generation metrics."""
    ks = sorted(report.recall_at)
    headers = ["MRR"] + [f"Recall@{k}" for k in ks] + [f"MAP@{k}" for k in ks]
    values = (
        [report.mrr] + [report.recall_at[k] for k in ks] + [report.map_at[k] for k in ks]
    )
    width = max(len(h) for h in headers) + 2
    lines = [
        "".join(h.rjust(width) for h in headers),
        "".join(f"{v:.6f}".rjust(width) for v in values),
    ]
    for name in ("faithfulness", "relevancy", "accuracy"):
        value = getattr(report, name)
        if value is not None:
            lines.append(f"{name}: {value:.6f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Judges
# ---------------------------------------------------------------------------

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


class JudgeClient(Protocol):
    def decompose_claims(self, answer: str) -> list[str]: ...

    def claim_supported(self, claim: str, contexts: Sequence[str]) -> bool: ...

    def relevancy(self, question: str, answer: str) -> float: ...

    def accuracy(self, question: str, answer: str, reference: str) -> float: ...


class MockJudge:
    """Deterministic rule-based judge for tests and offline runs.

    Claims are sentences; a claim is supported when it appears verbatim
    (case-insensitive) in any context. Relevancy is the fraction of
    question tokens present in the answer; accuracy is the token-set F1
    against the reference answer.
    """

    def decompose_claims(self, answer: str) -> list[str]:
        return [s.strip() for s in _SENTENCE_SPLIT.split(answer.strip()) if s.strip()]

    def claim_supported(self, claim: str, contexts: Sequence[str]) -> bool:
        needle = claim.lower()
        return any(needle in context.lower() for context in contexts)

    def relevancy(self, question: str, answer: str) -> float:
        if not answer.strip():
            return 0.0
        question_tokens = set(tokenize(question))
        if not question_tokens:
            return 0.0
        answer_tokens = set(tokenize(answer))
        return len(question_tokens & answer_tokens) / len(question_tokens)

    def accuracy(self, question: str, answer: str, reference: str) -> float:
        answer_tokens = set(tokenize(answer))
        reference_tokens = set(tokenize(reference))
        if not answer_tokens or not reference_tokens:
            return 1.0 if answer_tokens == reference_tokens else 0.0
        overlap = len(answer_tokens & reference_tokens)
        if overlap == 0:
            return 0.0
        precision = overlap / len(answer_tokens)
        recall_value = overlap / len(reference_tokens)
        return 2 * precision * recall_value / (precision + recall_value)


CLAIM_DECOMPOSITION_PROMPT = """\
Break the following answer into its atomic factual claims. Reply with one
claim per line, each starting with "- ". Do not add commentary.

Answer:
{answer}
"""

CLAIM_SUPPORT_PROMPT = """\
Context passages:
{contexts}

Claim: {claim}

Can the claim be inferred from the context passages alone? Reply with
exactly YES or NO.
"""

RELEVANCY_PROMPT = """\
Question: {question}
Answer: {answer}

How relevant is the answer to the question, on a scale from 0 to 1?
Reply with exactly one line of the form "Score: <number>".
"""

ACCURACY_PROMPT = """\
Question: {question}
Reference answer: {reference}
Candidate answer: {answer}

How accurate is the candidate answer relative to the reference, on a
scale from 0 to 1? Reply with exactly one line of the form
"Score: <number>".
"""

_SCORE_RE = re.compile(r"score\s*[:=]\s*([01](?:\.\d+)?|\.\d+)", re.IGNORECASE)


class LlmJudge:
    """Judge backed by a chat backend via the gateway module."""

    def __init__(self, backend: str, preset: str = "detailed") -> None:
        from .gateway import get_preset

        self.backend = backend
        self.cfg = get_preset(preset)

    def _ask(self, prompt: str) -> str:
        from .gateway import chat

        exchange = chat(
            [("system", "You are a strict evaluation assistant."), ("user", prompt)],
            self.cfg,
            self.backend,
        )
        return exchange.response_text

    def decompose_claims(self, answer: str) -> list[str]:
        response = self._ask(CLAIM_DECOMPOSITION_PROMPT.format(answer=answer))
        claims = [
            line.strip()[2:].strip()
            for line in response.splitlines()
            if line.strip().startswith("- ")
        ]
        return [c for c in claims if c]

    def claim_supported(self, claim: str, contexts: Sequence[str]) -> bool:
        response = self._ask(
            CLAIM_SUPPORT_PROMPT.format(contexts="\n\n".join(contexts), claim=claim)
        )
        return response.strip().upper().startswith("YES")

    def _score(self, prompt: str) -> float:
        response = self._ask(prompt)
        match = _SCORE_RE.search(response)
        if not match:
            raise EvalError(f"judge returned no score: {response!r}")
        return max(0.0, min(1.0, float(match.group(1))))

    def relevancy(self, question: str, answer: str) -> float:
        return self._score(RELEVANCY_PROMPT.format(question=question, answer=answer))

    def accuracy(self, question: str, answer: str, reference: str) -> float:
        return self._score(
            ACCURACY_PROMPT.format(question=question, reference=reference, answer=answer)
        )


def make_judge(locator: str) -> JudgeClient:
    """'mock' or an http(s) endpoint locator."""
    if locator == "mock":
        return MockJudge()
    return LlmJudge(locator)


def faithfulness(answer: str, contexts: Sequence[str], judge: JudgeClient) -> float:
    """Fraction of the answer's claims supported by the contexts."""
    if not answer.strip():
        raise EvalError("no claims: answer is empty")
    claims = judge.decompose_claims(answer)
    if not claims:
        raise EvalError("no claims extracted from answer")
    supported = sum(1 for claim in claims if judge.claim_supported(claim, contexts))
    return supported / len(claims)


def answer_scores(
    question: str, answer: str, reference_answer: str, judge: JudgeClient
) -> tuple[float, float]:
    """(relevancy, accuracy), both judge-scored in [0, 1]."""
    return judge.relevancy(question, answer), judge.accuracy(question, answer, reference_answer)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def load_qrels(path) -> tuple[Qrels, dict[str, str]]:
    """Read {query_id, query, relevant: [...]} records -> (Qrels, query texts)."""
    relevant: dict[str, frozenset[str]] = {}
    texts: dict[str, str] = {}
    for lineno, record in read_records(path):
        try:
            query_id = str(record["query_id"])
            relevant[query_id] = frozenset(str(c) for c in record["relevant"])
            texts[query_id] = str(record.get("query", ""))
        except KeyError as exc:
            raise EvalError(f"{path}:{lineno}: bad qrels record: missing {exc}") from exc
    return Qrels(relevant=relevant), texts


def load_run(path) -> RetrievalRun:
    """Read {query_id, ranking: [...]} records."""
    rankings: dict[str, tuple[str, ...]] = {}
    for lineno, record in read_records(path):
        try:
            rankings[str(record["query_id"])] = tuple(str(c) for c in record["ranking"])
        except KeyError as exc:
            raise EvalError(f"{path}:{lineno}: bad run record: missing {exc}") from exc
    return RetrievalRun(rankings=rankings)


def write_run(run: RetrievalRun, path) -> int:
    return write_records(
        path,
        (
            {"query_id": query_id, "ranking": list(ranking)}
            for query_id, ranking in run.rankings.items()
        ),
        header="policyrag retrieval run v1",
    )


def write_qrels(qrels: Qrels, texts: dict[str, str], path) -> int:
    return write_records(
        path,
        (
            {
                "query_id": query_id,
                "query": texts.get(query_id, ""),
                "relevant": sorted(chunk_ids),
            }
            for query_id, chunk_ids in sorted(qrels.relevant.items())
        ),
        header="policyrag qrels v1",
    )
