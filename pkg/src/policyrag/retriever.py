"""Late-interaction index and exhaustive top-k search.

The relevance score between a query and a passage is the sum, over query
tokens, of the best dot product against any passage token. Both sides
hold unit-norm rows, so each term is a cosine similarity in [-1, 1].

The index stores every chunk's rendered text and token matrix and scores
queries against all of them; at the corpus scales this workbench targets
(thousands of chunks) exhaustive scoring is fast and exactly reproducible.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus, render_chunk
from .encoder import EncoderError, EncoderParams, TokenEmbeddingMatrix, embed

logger = logging.getLogger(__name__)

_INDEX_MAGIC = b"PRAGIDX1"


class RetrieverError(ValueError):
    """Raised for dimension mismatches, empty queries, or bad index files."""


def maxsim(query: TokenEmbeddingMatrix, passage: TokenEmbeddingMatrix) -> float:
    """Late-interaction score: sum over query tokens of the max dot product.

    With unit rows the result lies in [-T_q, T_q] where T_q is the query
    token count.
    """
    if query.dim != passage.dim:
        raise RetrieverError(f"dimension mismatch: query d={query.dim}, passage d={passage.dim}")
    if query.token_count == 0 or passage.token_count == 0:
        raise RetrieverError("cannot score an empty embedding matrix")
    similarities = query.rows @ passage.rows.T
    return float(similarities.max(axis=1).sum())


@dataclass(frozen=True)
class IndexEntry:
    matrix: TokenEmbeddingMatrix
    rendered_text: str


@dataclass
class LateInteractionIndex:
    """Immutable after build; safe for concurrent searches."""

    entries: dict[str, IndexEntry]
    dim: int
    params: EncoderParams
    skipped_chunk_ids: tuple[str, ...] = ()

    @property
    def encoder_fingerprint(self) -> str:
        return self.params.fingerprint()

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class RankedList:
    """Search hits in descending score order, ties broken by ascending chunk_id."""

    query: str
    hits: tuple[tuple[str, float], ...] = field(default_factory=tuple)

    def chunk_ids(self) -> list[str]:
        return [chunk_id for chunk_id, _ in self.hits]


def build_index(corpus: Corpus, params: EncoderParams) -> LateInteractionIndex:
    """Render and embed every chunk. Chunks with no tokens are skipped with a warning."""
    if corpus.chunk_count == 0:
        raise RetrieverError("cannot build an index over an empty corpus")
    params.validate()
    entries: dict[str, IndexEntry] = {}
    skipped: list[str] = []
    for chunk in corpus.chunks:
        rendered = render_chunk(chunk)
        try:
            matrix = embed(rendered, params)
        except EncoderError:
            logger.warning("skipping chunk %s: no tokens after rendering", chunk.chunk_id)
            skipped.append(chunk.chunk_id)
            continue
        entries[chunk.chunk_id] = IndexEntry(matrix=matrix, rendered_text=rendered)
    if not entries:
        raise RetrieverError("index build produced no entries (all chunks skipped)")
    return LateInteractionIndex(
        entries=entries,
        dim=params.out_dim,
        params=params,
        skipped_chunk_ids=tuple(skipped),
    )


def search(index: LateInteractionIndex, query: str, k: int) -> RankedList:
    """Exhaustive top-k search. k beyond the index size returns everything ranked."""
    if k < 1:
        raise RetrieverError(f"k must be >= 1, got {k}")
    try:
        query_matrix = embed(query, index.params)
    except EncoderError as exc:
        raise RetrieverError(f"cannot embed query: {exc}") from exc
    scored = [
        (chunk_id, maxsim(query_matrix, entry.matrix))
        for chunk_id, entry in index.entries.items()
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return RankedList(query=query, hits=tuple(scored[:k]))


def _write_bytes(handle, data: bytes) -> None:
    handle.write(struct.pack("<I", len(data)))
    handle.write(data)


def _write_str(handle, value: str) -> None:
    _write_bytes(handle, value.encode("utf-8"))


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0

    def take(self, count: int) -> bytes:
        if self.offset + count > len(self.data):
            raise RetrieverError("truncated index file")
        piece = self.data[self.offset : self.offset + count]
        self.offset += count
        return piece

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def block(self) -> bytes:
        return self.take(self.u32())

    def string(self) -> str:
        return self.block().decode("utf-8")


def save_index(index: LateInteractionIndex, path: str | Path) -> None:
    """Persist to a single self-contained file (encoder params embedded)."""
    import io

    params_buf = io.BytesIO()
    params_buf.write(struct.pack("<IIq", index.params.base_dim, index.params.out_dim, index.params.hash_seed))
    params_buf.write(np.ascontiguousarray(index.params.projection, dtype=np.float64).tobytes())

    with Path(path).open("wb") as handle:
        handle.write(_INDEX_MAGIC)
        handle.write(struct.pack("<II", index.dim, len(index.entries)))
        _write_str(handle, index.encoder_fingerprint)
        _write_bytes(handle, params_buf.getvalue())
        for chunk_id in sorted(index.entries):
            entry = index.entries[chunk_id]
            _write_str(handle, chunk_id)
            _write_str(handle, entry.rendered_text)
            handle.write(struct.pack("<I", entry.matrix.token_count))
            for token in entry.matrix.token_strings:
                _write_str(handle, token)
            handle.write(np.ascontiguousarray(entry.matrix.rows, dtype=np.float64).tobytes())


def load_index(path: str | Path) -> LateInteractionIndex:
    data = Path(path).read_bytes()
    if data[: len(_INDEX_MAGIC)] != _INDEX_MAGIC:
        raise RetrieverError(f"not an index file: {path}")
    reader = _Reader(data[len(_INDEX_MAGIC) :])
    dim = reader.u32()
    count = reader.u32()
    fingerprint = reader.string()

    params_blob = reader.block()
    base_dim, out_dim, hash_seed = struct.unpack_from("<IIq", params_blob, 0)
    header_size = struct.calcsize("<IIq")
    projection = np.frombuffer(params_blob, dtype="<f8", offset=header_size).reshape(
        base_dim, out_dim
    )
    params = EncoderParams(
        base_dim=base_dim, out_dim=out_dim, projection=projection.copy(), hash_seed=hash_seed
    )
    if params.fingerprint() != fingerprint:
        raise RetrieverError("index fingerprint does not match embedded encoder params")

    entries: dict[str, IndexEntry] = {}
    for _ in range(count):
        chunk_id = reader.string()
        rendered = reader.string()
        token_count = reader.u32()
        tokens = tuple(reader.string() for _ in range(token_count))
        rows = np.frombuffer(reader.take(token_count * dim * 8), dtype="<f8").reshape(
            token_count, dim
        )
        entries[chunk_id] = IndexEntry(
            matrix=TokenEmbeddingMatrix(rows=rows.copy(), token_strings=tokens),
            rendered_text=rendered,
        )
    return LateInteractionIndex(entries=entries, dim=dim, params=params)
