"""Chunked policy corpus: ingest, chunk rendering, and corpus statistics.

A corpus file is newline-delimited JSON, one record per chunk (see
``records``). Documents are reconstructed by grouping chunks on doc_id;
they are never re-chunked here; segment boundaries come from upstream.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, date
from pathlib import Path
from typing import Any, Iterable

from .records import RecordFormatError, read_records, write_records


class CorpusError(ValueError):
    """Raised for missing files, malformed records, or invariant violations."""


_DATE_FORMATS = ("%Y/%m/%d", "%m/%d/%Y", "%B %d, %Y", "%b %d, %Y")

_REQUIRED_KEYS = (
    "chunk_id",
    "doc_id",
    "segment_index",
    "text",
    "document_name",
    "authority",
    "doc_type",
)


def normalize_date(raw: str) -> str | None:
    """Return the ISO-8601 form of a date string, or None if unparseable."""
    value = raw.strip()
    if not value:
        return None
    try:
        return date.fromisoformat(value).isoformat()
    except ValueError:
        pass
    for fmt in _DATE_FORMATS:
        try:
            return datetime.strptime(value, fmt).date().isoformat()
        except ValueError:
            continue
    return None


@dataclass(frozen=True)
class Chunk:
    """A policy-document segment; the retrieval unit.

    ``dates`` holds ISO-8601 strings normalized at ingest; date strings
    that could not be parsed are kept verbatim in ``raw_dates`` and are
    excluded from date statistics. ``tags`` is None (not empty) when the
    segment was never annotated.
    """

    chunk_id: str
    doc_id: str
    segment_index: int
    text: str
    document_name: str
    authority: str
    doc_type: str
    dates: tuple[str, ...] = ()
    raw_dates: tuple[str, ...] = ()
    tags: tuple[str, ...] | None = None

    def word_count(self) -> int:
        return len(self.text.split())


@dataclass(frozen=True)
class Document:
    """A policy document reconstructed from its ordered segments."""

    doc_id: str
    title: str
    authority: str
    doc_type: str
    enacted_date: str | None
    tags: tuple[str, ...]
    segments: tuple[Chunk, ...]


@dataclass(frozen=True)
class Corpus:
    """Immutable view over documents and their chunks; safe to share."""

    documents: tuple[Document, ...]
    chunks: tuple[Chunk, ...] = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "_by_id", {chunk.chunk_id: chunk for chunk in self.chunks}
        )

    @property
    def doc_count(self) -> int:
        return len(self.documents)

    @property
    def chunk_count(self) -> int:
        return len(self.chunks)

    def chunk(self, chunk_id: str) -> Chunk:
        try:
            return self._by_id[chunk_id]  # type: ignore[attr-defined]
        except KeyError:
            raise CorpusError(f"unknown chunk_id: {chunk_id}") from None

    def has_chunk(self, chunk_id: str) -> bool:
        return chunk_id in self._by_id  # type: ignore[attr-defined]


@dataclass(frozen=True)
class CorpusStats:
    doc_count: int
    chunk_count: int
    doc_length_hist: dict[int, int]
    seg_length_hist: dict[int, int]
    segs_per_doc_hist: dict[int, int]
    mean_seg_words: float
    mean_segs_per_doc: float
    top_tags: tuple[tuple[str, int], ...]
    top_authorities: tuple[tuple[str, int], ...]
    date_hist: dict[str, int]


def _chunk_from_record(record: dict[str, Any], lineno: int, path: Path) -> Chunk:
    for key in _REQUIRED_KEYS:
        if key not in record:
            raise CorpusError(f"{path}:{lineno}: missing required key '{key}'")

    text = record["text"]
    if not isinstance(text, str) or not text.strip():
        raise CorpusError(f"{path}:{lineno}: chunk text is empty")

    segment_index = record["segment_index"]
    if not isinstance(segment_index, int) or isinstance(segment_index, bool) or segment_index < 0:
        raise CorpusError(f"{path}:{lineno}: segment_index must be a non-negative integer")

    raw_date_values = record.get("dates") or []
    if not isinstance(raw_date_values, list):
        raise CorpusError(f"{path}:{lineno}: dates must be a list")
    normalized: list[str] = []
    unparseable: list[str] = []
    for value in raw_date_values:
        iso = normalize_date(str(value))
        if iso is None:
            unparseable.append(str(value))
        else:
            normalized.append(iso)

    tags_value = record.get("tags")
    if tags_value is not None and not isinstance(tags_value, list):
        raise CorpusError(f"{path}:{lineno}: tags must be a list when present")

    return Chunk(
        chunk_id=str(record["chunk_id"]),
        doc_id=str(record["doc_id"]),
        segment_index=segment_index,
        text=text,
        document_name=str(record["document_name"]),
        authority=str(record["authority"]),
        doc_type=str(record["doc_type"]),
        dates=tuple(normalized),
        raw_dates=tuple(unparseable),
        tags=tuple(str(t) for t in tags_value) if tags_value is not None else None,
    )


def ingest(path: str | Path) -> Corpus:
    """Load a chunk record file and reconstruct its documents.

    The whole ingest is rejected on any malformed record (reported with
    its line number), duplicate chunk_id, or non-contiguous segment
    indices within a document.
    """
    path = Path(path)
    chunks: list[Chunk] = []
    seen_ids: dict[str, int] = {}
    try:
        for lineno, record in read_records(path):
            chunk = _chunk_from_record(record, lineno, path)
            if chunk.chunk_id in seen_ids:
                raise CorpusError(
                    f"{path}:{lineno}: duplicate chunk_id '{chunk.chunk_id}' "
                    f"(first seen on line {seen_ids[chunk.chunk_id]})"
                )
            seen_ids[chunk.chunk_id] = lineno
            chunks.append(chunk)
    except RecordFormatError as exc:
        raise CorpusError(str(exc)) from exc

    return _assemble(chunks)


def _assemble(chunks: list[Chunk]) -> Corpus:
    grouped: dict[str, list[Chunk]] = {}
    for chunk in chunks:
        grouped.setdefault(chunk.doc_id, []).append(chunk)

    documents: list[Document] = []
    for doc_id, members in grouped.items():
        members.sort(key=lambda c: c.segment_index)
        indices = [c.segment_index for c in members]
        if indices != list(range(len(members))):
            raise CorpusError(
                f"document '{doc_id}': segment indices {indices} are not contiguous from 0"
            )
        all_dates = sorted({d for c in members for d in c.dates})
        all_tags = sorted({t for c in members if c.tags for t in c.tags})
        first = members[0]
        documents.append(
            Document(
                doc_id=doc_id,
                title=first.document_name,
                authority=first.authority,
                doc_type=first.doc_type,
                enacted_date=all_dates[0] if all_dates else None,
                tags=tuple(all_tags),
                segments=tuple(members),
            )
        )

    return Corpus(documents=tuple(documents), chunks=tuple(chunks))


def export(corpus: Corpus, path: str | Path) -> int:
    """Write the corpus back out in the chunk record format (round-trips ingest)."""

    def to_record(chunk: Chunk) -> dict[str, Any]:
        record: dict[str, Any] = {
            "chunk_id": chunk.chunk_id,
            "doc_id": chunk.doc_id,
            "segment_index": chunk.segment_index,
            "text": chunk.text,
            "document_name": chunk.document_name,
            "authority": chunk.authority,
            "doc_type": chunk.doc_type,
            "dates": list(chunk.dates) + list(chunk.raw_dates),
        }
        if chunk.tags is not None:
            record["tags"] = list(chunk.tags)
        return record

    return write_records(path, (to_record(c) for c in corpus.chunks))


def render_chunk(chunk: Chunk) -> str:
    """Render a chunk into the text the retriever sees.

    Fixed layout: a metadata header (document, authority, dates, and tags
    when the segment was annotated), one blank line, then the segment
    text. The tags line is omitted entirely for unannotated segments.
    """
    lines = [
        f"document: {chunk.document_name}",
        f"authority: {chunk.authority}",
        f"dates: {', '.join(list(chunk.dates) + list(chunk.raw_dates))}",
    ]
    if chunk.tags is not None:
        lines.append(f"tags: {', '.join(chunk.tags)}")
    lines.append("")
    lines.append(chunk.text)
    return "\n".join(lines)


def stats(corpus: Corpus) -> CorpusStats:
    """Compute corpus statistics. Word counts are whitespace-split token counts."""
    if corpus.doc_count == 0:
        raise CorpusError("cannot compute statistics for an empty corpus")

    seg_lengths = [c.word_count() for c in corpus.chunks]
    doc_lengths = [sum(s.word_count() for s in d.segments) for d in corpus.documents]
    segs_per_doc = [len(d.segments) for d in corpus.documents]

    tag_counts: Counter[str] = Counter()
    authority_counts: Counter[str] = Counter()
    month_counts: Counter[str] = Counter()
    for chunk in corpus.chunks:
        if chunk.tags:
            tag_counts.update(chunk.tags)
        for iso in chunk.dates:
            month_counts[iso[:7]] += 1
    for doc in corpus.documents:
        authority_counts[doc.authority] += 1

    def ranked(counter: Counter[str]) -> tuple[tuple[str, int], ...]:
        return tuple(sorted(counter.items(), key=lambda kv: (-kv[1], kv[0])))

    return CorpusStats(
        doc_count=corpus.doc_count,
        chunk_count=corpus.chunk_count,
        doc_length_hist=dict(Counter(doc_lengths)),
        seg_length_hist=dict(Counter(seg_lengths)),
        segs_per_doc_hist=dict(Counter(segs_per_doc)),
        mean_seg_words=sum(seg_lengths) / len(seg_lengths),
        mean_segs_per_doc=corpus.chunk_count / corpus.doc_count,
        top_tags=ranked(tag_counts),
        top_authorities=ranked(authority_counts),
        date_hist=dict(sorted(month_counts.items())),
    )


def corpus_from_records(chunk_records: Iterable[dict[str, Any]]) -> Corpus:
    """Build a Corpus from in-memory records (same schema as the file format)."""
    chunks: list[Chunk] = []
    seen_ids: dict[str, int] = {}
    for position, record in enumerate(chunk_records, start=1):
        chunk = _chunk_from_record(record, position, Path("<memory>"))
        if chunk.chunk_id in seen_ids:
            raise CorpusError(f"duplicate chunk_id '{chunk.chunk_id}' at record {position}")
        seen_ids[chunk.chunk_id] = position
        chunks.append(chunk)
    return _assemble(chunks)
