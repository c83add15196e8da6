"""Contrastive fine-tuning of the token encoder.

Training data is (query, positive chunk, negative chunk) triples expanded
from labeled queries under one of three negative-sourcing strategies:
labeled negatives only, mined negatives only, or the union of both.
Mining takes the top-scoring non-positive chunks from an index built with
the pre-training encoder, once per run.

The objective per triple is the two-way InfoNCE loss

    loss = -log( e^{s+/tau} / (e^{s+/tau} + e^{s-/tau}) )
         = softplus((s- - s+) / tau)

where s+ and s- are the late-interaction scores of the positive and
negative chunks. The gradient with respect to the encoder projection is
computed analytically: each matched (query token, passage token) pair
contributes through the normalized projection rows of its two hash slots

    d(u.v)/d w_a = sign_a * (v - (u.v) u) / |w_a|

(and symmetrically for w_b), which vanishes when both tokens share a
slot, as it must since the cosine of a vector with itself is constant.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import Corpus, CorpusError, render_chunk
from .encoder import EncoderParams, token_slots, tokenize
from .records import read_records, write_records
from .retriever import LateInteractionIndex, build_index, search

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Raised when training cannot proceed (no triples, non-finite gradient)."""


@dataclass(frozen=True)
class LabeledQuery:
    """A query with human relevance judgments over chunks."""

    query: str
    positives: tuple[str, ...]
    negatives: tuple[str, ...]

    def __post_init__(self) -> None:
        overlap = set(self.positives) & set(self.negatives)
        if overlap:
            raise ValueError(f"chunks labeled both positive and negative: {sorted(overlap)}")


@dataclass(frozen=True)
class TrainingTriple:
    query: str
    positive: str
    negative: str

    def __post_init__(self) -> None:
        if self.positive == self.negative:
            raise ValueError("positive and negative must differ")


@dataclass(frozen=True)
class NegativeStrategy:
    """One of 'labeled', 'mined', or 'mixed' (+ how many to mine)."""

    kind: str
    mined_count: int = 10

    def __post_init__(self) -> None:
        if self.kind not in ("labeled", "mined", "mixed"):
            raise ValueError(f"unknown negative strategy: {self.kind!r}")
        if self.kind in ("mined", "mixed") and self.mined_count < 1:
            raise ValueError("mined_count must be >= 1 when mining is enabled")

    @property
    def uses_mining(self) -> bool:
        return self.kind in ("mined", "mixed")


@dataclass(frozen=True)
class ContrastiveConfig:
    tau: float = 1.0
    lr: float = 1e-3
    epochs: int = 1
    batch_size: int = 16
    seed: int = 0
    strategy: NegativeStrategy = NegativeStrategy("labeled")

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")


@dataclass(frozen=True)
class ContrastiveLog:
    triple_count: int
    skipped_queries: tuple[str, ...]
    epoch_losses: tuple[float, ...]


def infonce_loss(s_pos: float, s_neg: float, tau: float) -> float:
    """Two-way InfoNCE in numerically stable softplus form; always > 0."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if not (np.isfinite(s_pos) and np.isfinite(s_neg)):
        raise ValueError("scores must be finite")
    return float(np.logaddexp(0.0, (s_neg - s_pos) / tau))


def mine_negatives(
    query: str,
    positives: Iterable[str],
    index: LateInteractionIndex,
    mined_count: int,
) -> list[str]:
    """Top-scoring non-positive chunk ids for a query, in rank order.

    Searches the top (mined_count + |positives|) so that removing labeled
    positives still leaves mined_count candidates whenever the index is
    large enough; a smaller index yields every non-positive entry.
    """
    if mined_count < 1:
        raise ValueError("mined_count must be >= 1")
    positive_set = set(positives)
    ranked = search(index, query, k=mined_count + len(positive_set))
    mined = [cid for cid in ranked.chunk_ids() if cid not in positive_set]
    return mined[:mined_count]


def expand_triples(
    labeled: Sequence[LabeledQuery],
    strategy: NegativeStrategy,
    index: LateInteractionIndex | None = None,
) -> tuple[list[TrainingTriple], list[str]]:
    """All |P| x |N| pairs per query, concatenated in input order.

    Returns (triples, skipped_queries). A query is skipped with a warning
    when it has no positives or no usable negatives under the strategy.
    """
    if strategy.uses_mining and index is None:
        raise ValueError(f"strategy '{strategy.kind}' requires an index for mining")

    triples: list[TrainingTriple] = []
    skipped: list[str] = []
    for lq in labeled:
        if not lq.positives:
            logger.warning("skipping query with no positives: %r", lq.query)
            skipped.append(lq.query)
            continue
        if strategy.kind == "labeled":
            negatives = list(lq.negatives)
        elif strategy.kind == "mined":
            negatives = mine_negatives(lq.query, lq.positives, index, strategy.mined_count)
        else:  # mixed
            mined = mine_negatives(lq.query, lq.positives, index, strategy.mined_count)
            seen = set(lq.negatives)
            negatives = list(lq.negatives) + [cid for cid in mined if cid not in seen]
        negatives = [cid for cid in negatives if cid not in set(lq.positives)]
        if not negatives:
            logger.warning("skipping query with no usable negatives: %r", lq.query)
            skipped.append(lq.query)
            continue
        for positive in lq.positives:
            for negative in negatives:
                triples.append(TrainingTriple(lq.query, positive, negative))
    return triples, skipped


def _unit_rows(params: EncoderParams, tokens: list[str]):
    """(slots, signs, norms, units) for a token sequence under current params."""
    slots, signs = token_slots(tokens, params)
    raw = params.projection[slots]
    norms = np.linalg.norm(raw, axis=1)
    units = (raw / norms[:, None]) * signs[:, None]
    return slots, signs, norms, units


def _accumulate_maxsim_grad(
    grad: np.ndarray,
    coeff: float,
    q_state,
    p_state,
) -> float:
    """Add coeff * d maxsim / d projection into grad; returns the maxsim score."""
    q_slots, q_signs, q_norms, q_units = q_state
    p_slots, p_signs, p_norms, p_units = p_state
    sims = q_units @ p_units.T
    matches = sims.argmax(axis=1)
    score = float(sims[np.arange(len(q_slots)), matches].sum())
    for t, s in enumerate(matches):
        u = q_units[t]
        v = p_units[s]
        f = sims[t, s]
        grad[q_slots[t]] += coeff * q_signs[t] * (v - f * u) / q_norms[t]
        grad[p_slots[s]] += coeff * p_signs[s] * (u - f * v) / p_norms[s]
    return score


def triple_loss_and_grad(
    params: EncoderParams,
    query_text: str,
    positive_text: str,
    negative_text: str,
    tau: float,
) -> tuple[float, np.ndarray]:
    """InfoNCE loss for one triple and its analytic projection gradient."""
    q_tokens = tokenize(query_text)
    pos_tokens = tokenize(positive_text)
    neg_tokens = tokenize(negative_text)
    if not q_tokens or not pos_tokens or not neg_tokens:
        raise TrainingError("triple contains text with no tokens")

    q_state = _unit_rows(params, q_tokens)
    pos_state = _unit_rows(params, pos_tokens)
    neg_state = _unit_rows(params, neg_tokens)

    # Scores first (sigmoid weight depends on them), then one fused pass
    # that adds each side's contribution with its chain-rule coefficient.
    s_pos = float((q_state[3] @ pos_state[3].T).max(axis=1).sum())
    s_neg = float((q_state[3] @ neg_state[3].T).max(axis=1).sum())
    z = (s_neg - s_pos) / tau
    loss = float(np.logaddexp(0.0, z))
    sigma = float(1.0 / (1.0 + np.exp(-z))) if z >= -40 else 0.0

    grad = np.zeros_like(params.projection)
    _accumulate_maxsim_grad(grad, -sigma / tau, q_state, pos_state)
    _accumulate_maxsim_grad(grad, sigma / tau, q_state, neg_state)
    return loss, grad


def train_step(
    params: EncoderParams,
    batch: Sequence[TrainingTriple],
    corpus: Corpus,
    cfg: ContrastiveConfig,
) -> tuple[EncoderParams, float]:
    """One plain gradient-descent step on the mean batch loss.

    Chunks are re-rendered and re-embedded with the current params, so the
    step sees the encoder exactly as inference would.
    """
    if not batch:
        raise TrainingError("empty batch")
    grad = np.zeros_like(params.projection)
    total_loss = 0.0
    for triple in batch:
        pos_text = render_chunk(corpus.chunk(triple.positive))
        neg_text = render_chunk(corpus.chunk(triple.negative))
        loss, triple_grad = triple_loss_and_grad(params, triple.query, pos_text, neg_text, cfg.tau)
        total_loss += loss
        grad += triple_grad
    grad /= len(batch)
    if not np.all(np.isfinite(grad)):
        raise TrainingError("non-finite gradient; aborting step")
    updated = params.copy()
    updated.projection = params.projection - cfg.lr * grad
    return updated, total_loss / len(batch)


def train(
    labeled: Sequence[LabeledQuery],
    corpus: Corpus,
    cfg: ContrastiveConfig,
    initial_params: EncoderParams | None = None,
) -> tuple[EncoderParams, ContrastiveLog]:
    """Full training run: expand triples once, then seeded epochs of steps."""
    params = initial_params.copy() if initial_params is not None else EncoderParams.initialize(
        hash_seed=cfg.seed
    )

    index = build_index(corpus, params) if cfg.strategy.uses_mining else None
    triples, skipped = expand_triples(labeled, cfg.strategy, index)
    if not triples:
        raise TrainingError("no training triples after expansion")

    rng = np.random.default_rng(cfg.seed)
    epoch_losses: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(triples))
        losses: list[float] = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [triples[i] for i in order[start : start + cfg.batch_size]]
            params, batch_loss = train_step(params, batch, corpus, cfg)
            losses.extend([batch_loss] * len(batch))
        epoch_losses.append(float(np.mean(losses)))

    params.validate()
    return params, ContrastiveLog(
        triple_count=len(triples),
        skipped_queries=tuple(skipped),
        epoch_losses=tuple(epoch_losses),
    )


def load_labeled_queries(path) -> list[LabeledQuery]:
    """Read a labeled-query file: {query, positives: [...], negatives: [...]}."""
    queries: list[LabeledQuery] = []
    for lineno, record in read_records(path):
        try:
            queries.append(
                LabeledQuery(
                    query=str(record["query"]),
                    positives=tuple(str(c) for c in record.get("positives", [])),
                    negatives=tuple(str(c) for c in record.get("negatives", [])),
                )
            )
        except (KeyError, ValueError) as exc:
            raise CorpusError(f"{path}:{lineno}: bad labeled query: {exc}") from exc
    return queries


def write_triples(triples: Sequence[TrainingTriple], path) -> int:
    return write_records(
        path,
        (
            {"query": t.query, "positive": t.positive, "negative": t.negative}
            for t in triples
        ),
        header="policyrag training triples v1",
    )
