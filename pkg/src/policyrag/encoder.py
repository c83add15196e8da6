"""Per-token embeddings for queries and chunks.

The built-in encoder is deliberately small but fully trainable: each
token is feature-hashed to one of ``base_dim`` slots with a sign bit, and
the embedding is the L2-normalized matching row of a trainable
``base_dim x out_dim`` projection. Token -> slot assignment depends only
on (token, hash_seed), so the encoder is a pure function of its inputs
and the projection carries all learnable state.

An external HTTP embedding service can stand in for the built-in encoder
at inference time; its rows are re-normalized locally.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_BASE_DIM = 256
DEFAULT_OUT_DIM = 64

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_PARAMS_MAGIC = b"PRAGENC1"


class EncoderError(ValueError):
    """Raised for empty inputs, bad parameter files, or bad service responses."""


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


def token_slot(token: str, hash_seed: int, base_dim: int) -> tuple[int, int]:
    """Map a token to its (slot, sign) under a stable keyed hash."""
    digest = hashlib.blake2b(
        token.encode("utf-8"),
        digest_size=16,
        key=hash_seed.to_bytes(8, "little", signed=True),
    ).digest()
    slot = int.from_bytes(digest[:8], "little") % base_dim
    sign = 1 if digest[8] & 1 == 0 else -1
    return slot, sign


@dataclass(frozen=True)
class TokenEmbeddingMatrix:
    """Unit-norm row vectors, one per token of the encoded text."""

    rows: np.ndarray  # shape (T, d), float64, each row L2-normalized
    token_strings: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.rows.ndim != 2 or self.rows.shape[0] == 0:
            raise EncoderError("embedding matrix must have at least one row")
        if self.rows.shape[0] != len(self.token_strings):
            raise EncoderError("row count does not match token count")

    @property
    def token_count(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


@dataclass
class EncoderParams:
    """Trainable encoder state: the slot projection plus hashing config."""

    base_dim: int
    out_dim: int
    projection: np.ndarray  # shape (base_dim, out_dim), float64
    hash_seed: int

    @classmethod
    def initialize(
        cls,
        base_dim: int = DEFAULT_BASE_DIM,
        out_dim: int = DEFAULT_OUT_DIM,
        hash_seed: int = 0,
    ) -> "EncoderParams":
        """Seeded Gaussian projection; identical seeds give identical params."""
        rng = np.random.default_rng(hash_seed & 0xFFFFFFFF)
        projection = rng.standard_normal((base_dim, out_dim)) / np.sqrt(out_dim)
        return cls(base_dim=base_dim, out_dim=out_dim, projection=projection, hash_seed=hash_seed)

    def validate(self) -> None:
        if self.projection.shape != (self.base_dim, self.out_dim):
            raise EncoderError(
                f"projection shape {self.projection.shape} does not match "
                f"({self.base_dim}, {self.out_dim})"
            )
        if not np.all(np.isfinite(self.projection)):
            raise EncoderError("projection contains non-finite values")

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            base_dim=self.base_dim,
            out_dim=self.out_dim,
            projection=self.projection.copy(),
            hash_seed=self.hash_seed,
        )

    def fingerprint(self) -> str:
        """Stable hash over the full parameter state."""
        digest = hashlib.blake2b(digest_size=16)
        digest.update(struct.pack("<IIq", self.base_dim, self.out_dim, self.hash_seed))
        digest.update(np.ascontiguousarray(self.projection, dtype=np.float64).tobytes())
        return digest.hexdigest()

    def save(self, path: str | Path) -> None:
        self.validate()
        with Path(path).open("wb") as handle:
            handle.write(_PARAMS_MAGIC)
            handle.write(struct.pack("<IIq", self.base_dim, self.out_dim, self.hash_seed))
            handle.write(np.ascontiguousarray(self.projection, dtype=np.float64).tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "EncoderParams":
        data = Path(path).read_bytes()
        if data[: len(_PARAMS_MAGIC)] != _PARAMS_MAGIC:
            raise EncoderError(f"not an encoder parameter file: {path}")
        offset = len(_PARAMS_MAGIC)
        base_dim, out_dim, hash_seed = struct.unpack_from("<IIq", data, offset)
        offset += struct.calcsize("<IIq")
        expected = base_dim * out_dim * 8
        if len(data) - offset != expected:
            raise EncoderError(f"truncated encoder parameter file: {path}")
        projection = np.frombuffer(data, dtype="<f8", offset=offset).reshape(base_dim, out_dim)
        params = cls(
            base_dim=base_dim,
            out_dim=out_dim,
            projection=projection.copy(),
            hash_seed=hash_seed,
        )
        params.validate()
        return params


def token_slots(tokens: list[str], params: EncoderParams) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (slots, signs) for a token sequence."""
    slots = np.empty(len(tokens), dtype=np.intp)
    signs = np.empty(len(tokens), dtype=np.float64)
    for i, token in enumerate(tokens):
        slot, sign = token_slot(token, params.hash_seed, params.base_dim)
        slots[i] = slot
        signs[i] = sign
    return slots, signs


def embed(text: str, params: EncoderParams) -> TokenEmbeddingMatrix:
    """Encode text into unit-norm per-token vectors.

    Pure in (text, params); differentiable in the projection. Raises
    EncoderError for input that tokenizes to nothing.
    """
    tokens = tokenize(text)
    if not tokens:
        raise EncoderError("empty input: text has no tokens")
    params.validate()
    slots, signs = token_slots(tokens, params)
    raw = params.projection[slots] * signs[:, None]
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise EncoderError("projection row with zero norm; cannot normalize")
    return TokenEmbeddingMatrix(rows=raw / norms, token_strings=tuple(tokens))


def embed_external(
    text: str,
    endpoint: str,
    expected_dim: int | None = None,
    timeout_s: float = 10.0,
) -> TokenEmbeddingMatrix:
    """Fetch per-token embeddings from an HTTP embedding service.

    The service contract: POST {"text": ...} returning
    {"dim": int, "tokens": [str], "vectors": [[float]]}. Rows are
    re-normalized locally so downstream scoring sees unit vectors.
    """
    import requests

    try:
        response = requests.post(endpoint, json={"text": text}, timeout=timeout_s)
        response.raise_for_status()
        body = response.json()
    except requests.RequestException as exc:
        raise EncoderError(f"embedding service request failed: {exc}") from exc

    try:
        dim = int(body["dim"])
        tokens = [str(t) for t in body["tokens"]]
        vectors = np.asarray(body["vectors"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise EncoderError(f"malformed embedding service response: {exc}") from exc

    if vectors.ndim != 2 or vectors.shape[0] != len(tokens) or vectors.shape[1] != dim:
        raise EncoderError(
            f"embedding service shape mismatch: {vectors.shape} vs {len(tokens)} tokens, dim {dim}"
        )
    if expected_dim is not None and dim != expected_dim:
        raise EncoderError(f"dimension mismatch: service dim {dim}, index dim {expected_dim}")
    if not np.all(np.isfinite(vectors)):
        raise EncoderError("non-finite embedding in service response")
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise EncoderError("zero-norm embedding in service response")
    return TokenEmbeddingMatrix(rows=vectors / norms, token_strings=tuple(tokens))
