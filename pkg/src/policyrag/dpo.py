"""Preference alignment of a generation policy with the DPO objective.

For a preference pair (prompt x, chosen y+, rejected y-) the loss is

    loss = -log sigmoid( beta * h )
    h    = [log pi(y+|x) - log pi(y-|x)] - [log ref(y+|x) - log ref(y-|x)]

with the reference a frozen copy of the starting policy. beta times h is
the implicit reward margin; loss == softplus(-margin) identically.

The trainable policy here is a log-linear bigram table: one logit row per
previous-token context (plus a start-of-sequence context), softmaxed over
the vocabulary. Sequence log-likelihood, the full analytic gradient, and
preference learning are all exact on this model, which is the point: it
makes every number checkable. Production-scale generation goes through
the gateway module instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoder import tokenize
from .records import read_records, write_records

DESK_LR = 0.05
FULL_SCALE_LR = 5e-6
LR_PRESETS = {"desk": DESK_LR, "full-scale": FULL_SCALE_LR}


class PolicyError(ValueError):
    """Raised for vocabulary violations and malformed policy files."""


class DpoTrainingError(RuntimeError):
    """Raised when a training run cannot proceed."""


@dataclass(frozen=True)
class PreferencePair:
    prompt: str
    chosen: str
    rejected: str
    annotator_id: str | None = None
    created_at: str | None = None

    def __post_init__(self) -> None:
        if not self.prompt.strip():
            raise ValueError("prompt must be non-empty")
        if self.chosen == self.rejected:
            raise ValueError("chosen and rejected answers must differ")


@dataclass
class PolicyParams:
    """Log-linear bigram policy: per-context next-token logits.

    Row i of ``logits_table`` conditions on vocab token i; the final row
    is the start-of-sequence context used when a prompt has no tokens.
    The vocabulary is closed at dataset load; unknown tokens are an error.
    """

    vocab: dict[str, int]
    logits_table: np.ndarray  # shape (V + 1, V), float64

    @classmethod
    def from_pairs(cls, pairs: Sequence[PreferencePair]) -> "PolicyParams":
        """Uniform policy over the vocabulary observed in the pairs."""
        tokens: set[str] = set()
        for pair in pairs:
            tokens.update(tokenize(pair.prompt))
            tokens.update(tokenize(pair.chosen))
            tokens.update(tokenize(pair.rejected))
        if not tokens:
            raise PolicyError("preference pairs contain no tokens")
        vocab = {token: i for i, token in enumerate(sorted(tokens))}
        table = np.zeros((len(vocab) + 1, len(vocab)), dtype=np.float64)
        return cls(vocab=vocab, logits_table=table)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @property
    def start_context(self) -> int:
        return len(self.vocab)

    def token_index(self, token: str) -> int:
        try:
            return self.vocab[token]
        except KeyError:
            raise PolicyError(f"token {token!r} is outside the closed vocabulary") from None

    def validate(self) -> None:
        if self.logits_table.shape != (len(self.vocab) + 1, len(self.vocab)):
            raise PolicyError("logits table shape does not match vocabulary")
        if not np.all(np.isfinite(self.logits_table)):
            raise PolicyError("logits table contains non-finite values")

    def copy(self) -> "PolicyParams":
        return PolicyParams(vocab=dict(self.vocab), logits_table=self.logits_table.copy())

    def save(self, path: str | Path) -> None:
        self.validate()
        ordered = [t for t, _ in sorted(self.vocab.items(), key=lambda kv: kv[1])]
        payload = {"vocab": ordered, "logits": self.logits_table.tolist()}
        Path(path).write_text(json.dumps(payload), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PolicyParams":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
            vocab = {token: i for i, token in enumerate(payload["vocab"])}
            table = np.asarray(payload["logits"], dtype=np.float64)
        except (OSError, KeyError, ValueError) as exc:
            raise PolicyError(f"cannot load policy params from {path}: {exc}") from exc
        params = cls(vocab=vocab, logits_table=table)
        params.validate()
        return params


@dataclass(frozen=True)
class DpoConfig:
    beta: float = 0.1
    lr: float = DESK_LR
    epochs: int = 1
    batch_size: int = 2
    grad_accum_steps: int = 8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1 or self.grad_accum_steps < 1:
            raise ValueError("batch_size and grad_accum_steps must be >= 1")

    @property
    def effective_batch(self) -> int:
        return self.batch_size * self.grad_accum_steps


@dataclass(frozen=True)
class DpoEpochStats:
    mean_loss: float
    mean_margin: float


@dataclass(frozen=True)
class DpoLog:
    pair_count: int
    update_count: int
    epochs: tuple[DpoEpochStats, ...] = field(default_factory=tuple)


def _log_softmax(row: np.ndarray) -> np.ndarray:
    shifted = row - row.max()
    return shifted - np.log(np.exp(shifted).sum())


def _completion_steps(params: PolicyParams, prompt: str, completion: str) -> list[tuple[int, int]]:
    """(context, token) index pairs for each completion token."""
    completion_tokens = tokenize(completion)
    if not completion_tokens:
        raise PolicyError("completion has no tokens")
    prompt_tokens = tokenize(prompt)
    context = params.token_index(prompt_tokens[-1]) if prompt_tokens else params.start_context
    steps: list[tuple[int, int]] = []
    for token in completion_tokens:
        index = params.token_index(token)
        steps.append((context, index))
        context = index
    return steps


def sequence_logprob(params: PolicyParams, prompt: str, completion: str) -> float:
    """Sum of per-token log-softmax probabilities; always <= 0."""
    total = 0.0
    for context, token_index in _completion_steps(params, prompt, completion):
        total += float(_log_softmax(params.logits_table[context])[token_index])
    return total


def _margin_core(pair: PreferencePair, theta: PolicyParams, ref: PolicyParams) -> float:
    if theta.vocab != ref.vocab:
        raise PolicyError("policy and reference must share a vocabulary")
    theta_delta = sequence_logprob(theta, pair.prompt, pair.chosen) - sequence_logprob(
        theta, pair.prompt, pair.rejected
    )
    ref_delta = sequence_logprob(ref, pair.prompt, pair.chosen) - sequence_logprob(
        ref, pair.prompt, pair.rejected
    )
    return theta_delta - ref_delta


def implicit_reward_margin(
    pair: PreferencePair, theta: PolicyParams, ref: PolicyParams, beta: float
) -> float:
    """beta-scaled log-likelihood-ratio margin; the loss is softplus(-margin)."""
    return beta * _margin_core(pair, theta, ref)


def dpo_loss(pair: PreferencePair, theta: PolicyParams, ref: PolicyParams, beta: float) -> float:
    """Numerically stable -log sigmoid(beta * h); ln 2 exactly when theta == ref."""
    margin = implicit_reward_margin(pair, theta, ref, beta)
    if not np.isfinite(margin):
        raise PolicyError("non-finite margin")
    return float(np.logaddexp(0.0, -margin))


def dpo_loss_and_grad(
    pair: PreferencePair, theta: PolicyParams, ref: PolicyParams, beta: float
) -> tuple[float, np.ndarray]:
    """Loss plus the analytic gradient over every logits-table entry.

    d loss / d h = -beta * sigmoid(-beta h), and each completion step
    (context c, token j) of the chosen (+) / rejected (-) side contributes
    +-(e_j - softmax(row_c)) to d h / d row_c.
    """
    h = _margin_core(pair, theta, ref)
    margin = beta * h
    loss = float(np.logaddexp(0.0, -margin))
    sigma_neg = float(1.0 / (1.0 + np.exp(margin))) if margin <= 40 else 0.0
    weight = -beta * sigma_neg

    grad = np.zeros_like(theta.logits_table)
    for sign, completion in ((1.0, pair.chosen), (-1.0, pair.rejected)):
        for context, token_index in _completion_steps(theta, pair.prompt, completion):
            row = theta.logits_table[context]
            shifted = np.exp(row - row.max())
            probs = shifted / shifted.sum()
            contrib = weight * sign
            grad[context] += contrib * (-probs)
            grad[context, token_index] += contrib
    return loss, grad


def train_dpo(
    pairs: Sequence[PreferencePair],
    cfg: DpoConfig,
    initial_params: PolicyParams | None = None,
) -> tuple[PolicyParams, DpoLog]:
    """Gradient descent on the mean DPO loss with gradient accumulation.

    One parameter update happens per ``grad_accum_steps`` micro-batches of
    ``batch_size`` pairs (a trailing partial accumulation still updates),
    so an epoch over N pairs performs ceil(N / effective_batch) updates.
    """
    if not pairs:
        raise DpoTrainingError("no preference pairs to train on")
    params = initial_params.copy() if initial_params is not None else PolicyParams.from_pairs(pairs)
    params.validate()
    reference = params.copy()

    rng = np.random.default_rng(cfg.seed)
    update_count = 0
    epoch_stats: list[DpoEpochStats] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        losses: list[float] = []
        margins: list[float] = []
        accum_grad = np.zeros_like(params.logits_table)
        accum_pairs = 0
        micro_batches_done = 0

        def apply_update() -> None:
            nonlocal accum_grad, accum_pairs, micro_batches_done, update_count, params
            if accum_pairs == 0:
                return
            step = accum_grad / accum_pairs
            if not np.all(np.isfinite(step)):
                raise DpoTrainingError("non-finite gradient; aborting")
            params.logits_table = params.logits_table - cfg.lr * step
            update_count += 1
            accum_grad = np.zeros_like(params.logits_table)
            accum_pairs = 0
            micro_batches_done = 0

        for start in range(0, len(order), cfg.batch_size):
            micro = [pairs[i] for i in order[start : start + cfg.batch_size]]
            for pair in micro:
                loss, grad = dpo_loss_and_grad(pair, params, reference, cfg.beta)
                losses.append(loss)
                margins.append(implicit_reward_margin(pair, params, reference, cfg.beta))
                accum_grad += grad
                accum_pairs += 1
            micro_batches_done += 1
            if micro_batches_done == cfg.grad_accum_steps:
                apply_update()
        apply_update()

        epoch_stats.append(
            DpoEpochStats(mean_loss=float(np.mean(losses)), mean_margin=float(np.mean(margins)))
        )

    params.validate()
    return params, DpoLog(
        pair_count=len(pairs), update_count=update_count, epochs=tuple(epoch_stats)
    )


def load_preference_pairs(path) -> list[PreferencePair]:
    """Read a preference file: {prompt, chosen, rejected, annotator_id?, created_at?}."""
    pairs: list[PreferencePair] = []
    for lineno, record in read_records(path):
        try:
            pairs.append(
                PreferencePair(
                    prompt=str(record["prompt"]),
                    chosen=str(record["chosen"]),
                    rejected=str(record["rejected"]),
                    annotator_id=record.get("annotator_id"),
                    created_at=record.get("created_at"),
                )
            )
        except (KeyError, ValueError) as exc:
            raise PolicyError(f"{path}:{lineno}: bad preference record: {exc}") from exc
    return pairs


def write_preference_pairs(pairs: Sequence[PreferencePair], path) -> int:
    def to_record(pair: PreferencePair) -> dict:
        record = {"prompt": pair.prompt, "chosen": pair.chosen, "rejected": pair.rejected}
        if pair.annotator_id is not None:
            record["annotator_id"] = pair.annotator_id
        if pair.created_at is not None:
            record["created_at"] = pair.created_at
        return record

    return write_records(path, (to_record(p) for p in pairs), header="policyrag preference pairs v1")
