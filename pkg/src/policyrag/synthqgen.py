"""Synthetic query generation from prompt templates and corpus metadata.

Template syntax: ``{slot}`` is a required fillable marker bound to a
value sampled from the corpus's observed metadata; ``<...>`` wraps an
optional span that is independently included with probability 0.5.
Markers must be balanced and non-nested. Allowed slots: tag, tags,
authority, date, date_range, document.

Filled prompts are wrapped in a fixed instruction and sent to a chat
backend, which writes the actual question. Every generated query carries
its full provenance (template, bindings, included optionals, raw
response) so the filled prompt can be reconstructed exactly.
"""

from __future__ import annotations

import hashlib
import logging
import random
import re
from dataclasses import dataclass
from typing import Sequence

from .corpus import Corpus
from .gateway import GatewayError, GenerationConfig, chat, get_preset
from .records import read_records, write_records

logger = logging.getLogger(__name__)

ALLOWED_SLOTS = ("tag", "tags", "authority", "date", "date_range", "document")

QUERY_INSTRUCTION = (
    "You will be given a short writing prompt about policy documents. "
    "Respond with exactly one natural-language question that satisfies the "
    "prompt. Output only the question itself."
)


class TemplateError(ValueError):
    """Raised for malformed templates or unfillable slots."""


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    text: str

    def __post_init__(self) -> None:
        _validate_markers(self.text)


@dataclass(frozen=True)
class FilledPrompt:
    template_id: str
    final_text: str
    bindings: dict[str, str]
    included_optionals: tuple[int, ...]


@dataclass(frozen=True)
class GeneratedQuery:
    query_id: str
    query: str
    template_id: str
    bindings: dict[str, str]
    included_optionals: tuple[int, ...]
    filled_prompt: str
    split: str
    raw_response: str
    error: str | None = None


_SLOT_RE = re.compile(r"\{([^{}<>]*)\}")


def _validate_markers(text: str) -> None:
    depth_brace = depth_angle = 0
    for position, char in enumerate(text):
        if char == "{":
            depth_brace += 1
        elif char == "}":
            depth_brace -= 1
        elif char == "<":
            depth_angle += 1
        elif char == ">":
            depth_angle -= 1
        if depth_brace not in (0, 1) or depth_angle not in (0, 1):
            raise TemplateError(f"nested or unbalanced marker at position {position}")
        if depth_brace < 0 or depth_angle < 0:
            raise TemplateError(f"unbalanced marker at position {position}")
    if depth_brace != 0 or depth_angle != 0:
        raise TemplateError("unbalanced markers at end of template")
    for slot in _SLOT_RE.findall(text):
        if slot not in ALLOWED_SLOTS:
            raise TemplateError(f"unknown slot {{{slot}}}; allowed: {', '.join(ALLOWED_SLOTS)}")


def slot_pools(corpus: Corpus) -> dict[str, list[str]]:
    """Observed metadata values backing each slot, sorted for determinism."""
    tags = sorted({t for chunk in corpus.chunks if chunk.tags for t in chunk.tags})
    authorities = sorted({doc.authority for doc in corpus.documents if doc.authority})
    dates = sorted({d for chunk in corpus.chunks for d in chunk.dates})
    documents = sorted({doc.title for doc in corpus.documents if doc.title})
    return {
        "tag": tags,
        "tags": tags,
        "authority": authorities,
        "date": dates,
        "date_range": dates,
        "document": documents,
    }


def _sample_slot(slot: str, pools: dict[str, list[str]], rng: random.Random) -> str:
    pool = pools[slot]
    if not pool:
        raise TemplateError(f"slot {{{slot}}} has no observed values in the corpus")
    if slot == "tags":
        count = min(2, len(pool))
        return ", ".join(sorted(rng.sample(pool, count)))
    if slot == "date_range":
        if len(pool) == 1:
            start = end = pool[0]
        else:
            start, end = sorted(rng.sample(pool, 2))
        return f"between {start} and {end}"
    return rng.choice(pool)


_OPTIONAL_RE = re.compile(r"<([^<>]*)>")
_SPACE_RE = re.compile(r"[ \t]{2,}")


def _resolve(text: str, included: Sequence[int], bindings: dict[str, str]) -> str:
    counter = [0]

    def replace_optional(match: re.Match) -> str:
        index = counter[0]
        counter[0] += 1
        return match.group(1) if index in included else ""

    resolved = _OPTIONAL_RE.sub(replace_optional, text)
    resolved = _SLOT_RE.sub(lambda m: bindings[m.group(1)], resolved)
    return _SPACE_RE.sub(" ", resolved).strip()


def fill_template(template: PromptTemplate, corpus: Corpus, rng_seed: int) -> FilledPrompt:
    """Deterministic fill: optional spans first (p=0.5 each), then slot values.

    Each distinct slot name is sampled once, in order of first appearance
    in the resolved text, so a repeated slot binds the same value.
    """
    rng = random.Random(rng_seed)
    pools = slot_pools(corpus)

    optional_spans = _OPTIONAL_RE.findall(template.text)
    included = tuple(i for i in range(len(optional_spans)) if rng.random() < 0.5)

    counter = [0]

    def keep_included(match: re.Match) -> str:
        index = counter[0]
        counter[0] += 1
        return match.group(1) if index in included else ""

    resolved_text = _OPTIONAL_RE.sub(keep_included, template.text)

    bindings: dict[str, str] = {}
    for slot in _SLOT_RE.findall(resolved_text):
        if slot not in bindings:
            bindings[slot] = _sample_slot(slot, pools, rng)

    final_text = _resolve(template.text, included, bindings)
    if _SLOT_RE.search(final_text) or _OPTIONAL_RE.search(final_text):
        raise TemplateError("residual markers after filling")
    return FilledPrompt(
        template_id=template.template_id,
        final_text=final_text,
        bindings=bindings,
        included_optionals=included,
    )


def render_filled(
    template: PromptTemplate, bindings: dict[str, str], included_optionals: Sequence[int]
) -> str:
    """Re-derive the final text from recorded provenance."""
    return _resolve(template.text, included_optionals, bindings)


def _split_for(seed: int, index: int, train_fraction: float) -> str:
    digest = hashlib.blake2b(
        f"split:{seed}:{index}".encode(), digest_size=8
    ).digest()
    value = int.from_bytes(digest, "little") / 2**64
    return "train" if value < train_fraction else "test"


def generate_queries(
    templates: Sequence[PromptTemplate],
    corpus: Corpus,
    llm_backend: str,
    n: int,
    seed: int,
    cfg: GenerationConfig | None = None,
    train_fraction: float = 0.8,
) -> list[GeneratedQuery]:
    """Produce n queries, filling templates round-robin.

    Backend failures are recorded on the affected query (empty text, error
    set) and generation continues; callers see the shortfall in the log.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not templates:
        raise ValueError("no templates supplied")
    cfg = cfg or get_preset("detailed")

    results: list[GeneratedQuery] = []
    failures = 0
    for index in range(n):
        template = templates[index % len(templates)]
        filled = fill_template(template, corpus, rng_seed=seed + index)
        query_id = f"q{index:05d}"
        split = _split_for(seed, index, train_fraction)
        try:
            exchange = chat(
                [("system", QUERY_INSTRUCTION), ("user", filled.final_text)],
                cfg,
                llm_backend,
            )
            query_text = exchange.response_text.strip()
            error = None
            raw = exchange.response_text
        except GatewayError as exc:
            logger.warning("query generation failed for %s: %s", query_id, exc)
            failures += 1
            query_text = ""
            error = str(exc)
            raw = ""
        results.append(
            GeneratedQuery(
                query_id=query_id,
                query=query_text,
                template_id=template.template_id,
                bindings=filled.bindings,
                included_optionals=filled.included_optionals,
                filled_prompt=filled.final_text,
                split=split,
                raw_response=raw,
                error=error,
            )
        )
    if failures:
        logger.warning("query generation shortfall: %d of %d failed", failures, n)
    return results


def screen_queries(
    queries: Sequence[GeneratedQuery], decisions_path
) -> list[GeneratedQuery]:
    """Apply a human keep/discard decisions file; missing decisions keep.

    Decision records: {query_id, decision: "keep" | "discard"}. A decision
    referencing an unknown query id is an error.
    """
    known = {q.query_id for q in queries}
    decisions: dict[str, str] = {}
    for lineno, record in read_records(decisions_path):
        query_id = str(record.get("query_id", ""))
        decision = str(record.get("decision", ""))
        if query_id not in known:
            raise TemplateError(f"{decisions_path}:{lineno}: unknown query id {query_id!r}")
        if decision not in ("keep", "discard"):
            raise TemplateError(f"{decisions_path}:{lineno}: bad decision {decision!r}")
        decisions[query_id] = decision

    kept: list[GeneratedQuery] = []
    for query in queries:
        decision = decisions.get(query.query_id)
        if decision is None:
            logger.warning("no decision for %s; keeping by default", query.query_id)
            kept.append(query)
        elif decision == "keep":
            kept.append(query)
    return kept


def load_templates(path) -> list[PromptTemplate]:
    templates: list[PromptTemplate] = []
    for lineno, record in read_records(path):
        try:
            templates.append(
                PromptTemplate(template_id=str(record["template_id"]), text=str(record["text"]))
            )
        except (KeyError, TemplateError) as exc:
            raise TemplateError(f"{path}:{lineno}: bad template: {exc}") from exc
    return templates


def default_templates() -> list[PromptTemplate]:
    """The analysis-focused template set shipped with the package."""
    from importlib.resources import files

    path = files("policyrag").joinpath("data/query_templates.jsonl")
    templates: list[PromptTemplate] = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        import json

        record = json.loads(line)
        templates.append(PromptTemplate(record["template_id"], record["text"]))
    return templates


def load_generated_queries(path) -> list[GeneratedQuery]:
    """Read a generated-query file back (provenance fields beyond the record are blank)."""
    queries: list[GeneratedQuery] = []
    for lineno, record in read_records(path):
        try:
            queries.append(
                GeneratedQuery(
                    query_id=str(record["query_id"]),
                    query=str(record["query"]),
                    template_id=str(record["template_id"]),
                    bindings=dict(record.get("bindings", {})),
                    included_optionals=tuple(record.get("included_optionals", [])),
                    filled_prompt="",
                    split=str(record.get("split", "train")),
                    raw_response=str(record["query"]),
                )
            )
        except KeyError as exc:
            raise TemplateError(f"{path}:{lineno}: bad generated query: missing {exc}") from exc
    return queries


def write_generated_queries(queries: Sequence[GeneratedQuery], path) -> int:
    return write_records(
        path,
        (
            {
                "query_id": q.query_id,
                "query": q.query,
                "template_id": q.template_id,
                "bindings": q.bindings,
                "split": q.split,
                "included_optionals": list(q.included_optionals),
            }
            for q in queries
        ),
        header="policyrag generated queries v1",
    )
