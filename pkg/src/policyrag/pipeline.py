"""End-to-end grounded question answering: retrieve, assemble, generate.

The generator sees the top-k chunks, each prefixed with its chunk id, and
is instructed to cite the ids of segments it relies on in square
brackets. Citations are parsed back out of the response and filtered to
the retrieval set, so a grounded answer can never cite a chunk that was
not retrieved.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .gateway import chat, get_preset
from .retriever import LateInteractionIndex, RankedList, RetrieverError, search

DEFAULT_CONTEXT_CHAR_BUDGET = 24000

ANSWERING_SYSTEM_PROMPT = (
    "You are a policy research assistant. Answer the question using only the "
    "numbered document segments provided. When you rely on a segment, cite its "
    "id in square brackets, for example [segment_12_0]. If the segments do not "
    "contain the answer, say so explicitly."
)

_CITATION_RE = re.compile(r"\[([^\[\]]+)\]")


@dataclass(frozen=True)
class GroundedAnswer:
    question: str
    answer_text: str
    cited_chunk_ids: tuple[str, ...]
    retrieval: RankedList
    generator_preset: str

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "answer_text": self.answer_text,
            "cited_chunk_ids": list(self.cited_chunk_ids),
            "retrieval": {
                "query": self.retrieval.query,
                "hits": [[chunk_id, score] for chunk_id, score in self.retrieval.hits],
            },
            "generator_preset": self.generator_preset,
        }


def assemble_context(
    index: LateInteractionIndex,
    chunk_ids: list[str],
    char_budget: int = DEFAULT_CONTEXT_CHAR_BUDGET,
) -> str:
    """Concatenate rendered chunks, ids prefixed, dropping lowest ranks over budget."""
    blocks = [f"[{chunk_id}]\n{index.entries[chunk_id].rendered_text}" for chunk_id in chunk_ids]
    while len(blocks) > 1 and sum(len(b) + 2 for b in blocks) > char_budget:
        blocks.pop()
    return "\n\n".join(blocks)


def extract_citations(text: str, allowed_ids: set[str]) -> tuple[str, ...]:
    """Bracketed ids in response order, deduplicated, filtered to the retrieval set."""
    seen: list[str] = []
    for candidate in _CITATION_RE.findall(text):
        candidate = candidate.strip()
        if candidate in allowed_ids and candidate not in seen:
            seen.append(candidate)
    return tuple(seen)


def answer(
    index: LateInteractionIndex,
    query: str,
    backend: str,
    k: int = 20,
    preset: str = "detailed",
    char_budget: int = DEFAULT_CONTEXT_CHAR_BUDGET,
) -> GroundedAnswer:
    """Retrieve top-k chunks and generate one cited answer."""
    if not query.strip():
        raise RetrieverError("empty query")
    cfg = get_preset(preset)
    ranked = search(index, query, k)
    context = assemble_context(index, ranked.chunk_ids(), char_budget)
    user_message = f"{context}\n\nQuestion: {query}"
    exchange = chat(
        [("system", ANSWERING_SYSTEM_PROMPT), ("user", user_message)], cfg, backend
    )
    cited = extract_citations(exchange.response_text, set(ranked.chunk_ids()))
    return GroundedAnswer(
        question=query,
        answer_text=exchange.response_text,
        cited_chunk_ids=cited,
        retrieval=ranked,
        generator_preset=preset,
    )
