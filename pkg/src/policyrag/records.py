"""Newline-delimited JSON record files.

Every on-disk artifact in this package (chunk exports, labeled queries,
preference pairs, qrels, runs, templates) uses the same envelope: UTF-8,
one JSON object per line. Blank lines and lines starting with ``#`` are
ignored so files may carry a schema comment header.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Iterator


class RecordFormatError(ValueError):
    """A record file is missing, unreadable, or has a malformed line."""


def read_records(path: str | Path) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield (line_number, record) pairs from a JSONL file.

    Raises RecordFormatError for a missing file or a line that is not a
    JSON object; the error message carries the 1-based line number.
    """
    path = Path(path)
    if not path.exists():
        raise RecordFormatError(f"record file not found: {path}")
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                record = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise RecordFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise RecordFormatError(
                    f"{path}:{lineno}: expected a JSON object, got {type(record).__name__}"
                )
            yield lineno, record


def load_records(path: str | Path) -> list[dict[str, Any]]:
    """Read all records from ``path`` into a list."""
    return [record for _, record in read_records(path)]


def write_records(
    path: str | Path,
    records: Iterable[dict[str, Any]],
    header: str | None = None,
) -> int:
    """Write records as JSONL, optionally preceded by a ``#`` comment header.

    Returns the number of records written. Key order within each record is
    preserved as given, so writers control the byte-exact layout.
    """
    path = Path(path)
    count = 0
    with path.open("w", encoding="utf-8") as handle:
        if header is not None:
            handle.write(f"# {header}\n")
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
            count += 1
    return count
