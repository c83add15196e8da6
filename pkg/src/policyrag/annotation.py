"""Annotation task store: relevance labeling and pairwise answer preference.

Persistence is one append-only JSONL event log per state directory; all
task and label state is derived by replaying it, so rebuilding the store
from the log always reproduces identical exports. Label writes are
serialized through the single store instance; reads see plain in-memory
snapshots.

Exports feed the trainers and the eval suite directly: labeled queries
(relevance tasks), preference pairs (preference tasks, one pair per
annotator who chose), and qrels.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Sequence

from .gateway import GatewayError, chat, get_preset
from .records import write_records
from .retriever import LateInteractionIndex, search

logger = logging.getLogger(__name__)

RELEVANCE_DEPTHS = (20, 50)
_LABEL_VALUES = ("relevant", "irrelevant")


class AnnotationError(ValueError):
    """Raised for unknown tasks, malformed payloads, or a corrupt log."""


@dataclass
class RelevanceTask:
    task_id: str
    query_id: str
    query: str
    depth: int
    candidates: tuple[tuple[str, str], ...]  # (chunk_id, rendered text), rank order
    labels: dict[str, str] = field(default_factory=dict)

    @property
    def candidate_ids(self) -> tuple[str, ...]:
        return tuple(chunk_id for chunk_id, _ in self.candidates)

    @property
    def state(self) -> str:
        if not self.labels:
            return "open"
        if set(self.labels) == set(self.candidate_ids):
            return "complete"
        return "in_progress"

    def to_dict(self, include_candidates: bool = True) -> dict:
        out: dict[str, Any] = {
            "task_id": self.task_id,
            "type": "relevance",
            "query_id": self.query_id,
            "query": self.query,
            "depth": self.depth,
            "state": self.state,
            "labels": dict(self.labels),
        }
        if include_candidates:
            out["candidates"] = [
                {"chunk_id": chunk_id, "rendered_text": text}
                for chunk_id, text in self.candidates
            ]
        return out


@dataclass
class PreferenceTask:
    task_id: str
    question_id: str
    question: str
    context: str
    answer_a: str  # preset "detailed"
    answer_b: str  # preset "concise"
    generation_prompt: str
    failed: bool = False
    error: str | None = None
    choices: dict[str, tuple[str, str]] = field(default_factory=dict)  # annotator -> (choice, ts)

    @property
    def state(self) -> str:
        if self.failed:
            return "failed"
        return "complete" if self.choices else "open"

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "type": "preference",
            "question_id": self.question_id,
            "question": self.question,
            "context": self.context,
            "answer_a": self.answer_a,
            "answer_b": self.answer_b,
            "state": self.state,
            "choices": {a: c for a, (c, _) in self.choices.items()},
        }


@dataclass(frozen=True)
class LabelRecord:
    seq: int
    task_id: str
    payload: dict
    annotator_id: str
    timestamp: str

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "task_id": self.task_id,
            "payload": self.payload,
            "annotator_id": self.annotator_id,
            "timestamp": self.timestamp,
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class AnnotationStore:
    """Event-sourced task store rooted at a state directory."""

    def __init__(self, state_dir: str | Path) -> None:
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.state_dir / "events.log"
        self._lock = threading.Lock()
        self._seq = 0
        self._relevance: dict[str, RelevanceTask] = {}
        self._preference: dict[str, PreferenceTask] = {}
        self._labels: list[LabelRecord] = []
        self._client_tokens: dict[str, LabelRecord] = {}
        if self.log_path.exists():
            self._replay()

    # -- event machinery ----------------------------------------------------

    def _replay(self) -> None:
        with self.log_path.open("r", encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    event = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise AnnotationError(f"{self.log_path}:{lineno}: corrupt event: {exc}") from exc
                if event["seq"] <= self._seq:
                    raise AnnotationError(
                        f"{self.log_path}:{lineno}: sequence numbers not strictly increasing"
                    )
                self._seq = event["seq"]
                self._apply(event)

    def _append(self, event: dict) -> dict:
        with self._lock:
            self._seq += 1
            event = {"seq": self._seq, "ts": _now(), **event}
            with self.log_path.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(event, ensure_ascii=False) + "\n")
            self._apply(event)
        return event

    def _apply(self, event: dict) -> None:
        kind = event["type"]
        if kind == "relevance_task":
            task = event["task"]
            self._relevance[task["task_id"]] = RelevanceTask(
                task_id=task["task_id"],
                query_id=task["query_id"],
                query=task["query"],
                depth=task["depth"],
                candidates=tuple((c[0], c[1]) for c in task["candidates"]),
            )
        elif kind == "preference_task":
            task = event["task"]
            self._preference[task["task_id"]] = PreferenceTask(
                task_id=task["task_id"],
                question_id=task["question_id"],
                question=task["question"],
                context=task["context"],
                answer_a=task["answer_a"],
                answer_b=task["answer_b"],
                generation_prompt=task["generation_prompt"],
                failed=task.get("failed", False),
                error=task.get("error"),
            )
        elif kind == "label":
            record = LabelRecord(
                seq=event["seq"],
                task_id=event["task_id"],
                payload=event["payload"],
                annotator_id=event["annotator_id"],
                timestamp=event["ts"],
            )
            self._labels.append(record)
            token = event.get("client_token")
            if token:
                self._client_tokens[token] = record
            self._apply_label(record)
        else:
            raise AnnotationError(f"unknown event type: {kind!r}")

    def _apply_label(self, record: LabelRecord) -> None:
        if record.task_id in self._relevance:
            task = self._relevance[record.task_id]
            for chunk_id, value in record.payload["labels"].items():
                task.labels[chunk_id] = value
        else:
            task = self._preference[record.task_id]
            task.choices[record.annotator_id] = (record.payload["choice"], record.timestamp)

    # -- task creation ------------------------------------------------------

    def create_relevance_tasks(
        self,
        queries: Sequence[tuple[str, str]],
        index: LateInteractionIndex,
        depth: int,
    ) -> list[RelevanceTask]:
        """One task per (query_id, depth), idempotent: existing tasks are returned as-is."""
        if depth not in RELEVANCE_DEPTHS:
            raise AnnotationError(f"depth must be one of {RELEVANCE_DEPTHS}, got {depth}")
        tasks: list[RelevanceTask] = []
        for query_id, query_text in queries:
            task_id = f"rel{depth}-{query_id}"
            if task_id in self._relevance:
                tasks.append(self._relevance[task_id])
                continue
            ranked = search(index, query_text, k=depth)
            candidates = [
                [chunk_id, index.entries[chunk_id].rendered_text]
                for chunk_id in ranked.chunk_ids()
            ]
            self._append(
                {
                    "type": "relevance_task",
                    "task": {
                        "task_id": task_id,
                        "query_id": query_id,
                        "query": query_text,
                        "depth": depth,
                        "candidates": candidates,
                    },
                }
            )
            tasks.append(self._relevance[task_id])
        return tasks

    def create_preference_tasks(
        self,
        questions: Sequence[dict],
        llm_backend: str,
    ) -> list[PreferenceTask]:
        """Per question: one answer from each preset. Generator failures mark the
        task failed and the batch continues."""
        detailed = get_preset("detailed")
        concise = get_preset("concise")
        tasks: list[PreferenceTask] = []
        for question in questions:
            question_id = str(question["question_id"])
            task_id = f"pref-{question_id}"
            if task_id in self._preference:
                tasks.append(self._preference[task_id])
                continue
            question_text = str(question["question"])
            context = str(question.get("document_text", ""))
            user_message = f"Document context:\n{context}\n\nQuestion: {question_text}"
            generation_prompt = f"{detailed.system_prompt}\n\n{user_message}"
            answer_a = answer_b = ""
            failed = False
            error: str | None = None
            try:
                answer_a = chat([("user", user_message)], detailed, llm_backend).response_text
                answer_b = chat([("user", user_message)], concise, llm_backend).response_text
            except GatewayError as exc:
                failed = True
                error = str(exc)
                logger.warning("preference task %s failed: %s", task_id, exc)
            self._append(
                {
                    "type": "preference_task",
                    "task": {
                        "task_id": task_id,
                        "question_id": question_id,
                        "question": question_text,
                        "context": context,
                        "answer_a": answer_a,
                        "answer_b": answer_b,
                        "generation_prompt": generation_prompt,
                        "failed": failed,
                        "error": error,
                    },
                }
            )
            tasks.append(self._preference[task_id])
        return tasks

    # -- labeling -----------------------------------------------------------

    def record_label(
        self,
        task_id: str,
        payload: dict,
        annotator_id: str,
        client_token: str | None = None,
    ) -> LabelRecord:
        """Append one label event; idempotent when the same client_token is re-sent."""
        if client_token and client_token in self._client_tokens:
            return self._client_tokens[client_token]
        if not annotator_id or not str(annotator_id).strip():
            raise AnnotationError("annotator_id must be non-empty")
        self._validate_payload(task_id, payload)
        self._append(
            {
                "type": "label",
                "task_id": task_id,
                "payload": payload,
                "annotator_id": annotator_id,
                "client_token": client_token,
            }
        )
        return self._labels[-1]

    def _validate_payload(self, task_id: str, payload: dict) -> None:
        if task_id in self._relevance:
            task = self._relevance[task_id]
            labels = payload.get("labels")
            if not isinstance(labels, dict) or not labels:
                raise AnnotationError("relevance payload must carry a non-empty 'labels' map")
            candidate_ids = set(task.candidate_ids)
            for chunk_id, value in labels.items():
                if chunk_id not in candidate_ids:
                    raise AnnotationError(
                        f"chunk {chunk_id!r} is not a candidate of task {task_id!r}"
                    )
                if value not in _LABEL_VALUES:
                    raise AnnotationError(f"label value must be one of {_LABEL_VALUES}")
        elif task_id in self._preference:
            task = self._preference[task_id]
            if task.failed:
                raise AnnotationError(f"task {task_id!r} failed generation; cannot label")
            if payload.get("choice") not in ("A", "B"):
                raise AnnotationError("preference payload must carry choice 'A' or 'B'")
        else:
            raise AnnotationError(f"unknown task: {task_id!r}")

    # -- queries ------------------------------------------------------------

    def relevance_tasks(self, state: str | None = None) -> list[RelevanceTask]:
        tasks = sorted(self._relevance.values(), key=lambda t: t.task_id)
        return [t for t in tasks if state is None or t.state == state]

    def preference_tasks(self, state: str | None = None) -> list[PreferenceTask]:
        tasks = sorted(self._preference.values(), key=lambda t: t.task_id)
        return [t for t in tasks if state is None or t.state == state]

    def label_records(self) -> list[LabelRecord]:
        return list(self._labels)

    # -- exports ------------------------------------------------------------

    def labeled_query_records(self) -> list[dict]:
        """LabeledQuery records from every relevance task with at least one label."""
        records = []
        for task in self.relevance_tasks():
            if not task.labels:
                continue
            positives = [c for c in task.candidate_ids if task.labels.get(c) == "relevant"]
            negatives = [c for c in task.candidate_ids if task.labels.get(c) == "irrelevant"]
            records.append(
                {
                    "query_id": task.query_id,
                    "query": task.query,
                    "positives": positives,
                    "negatives": negatives,
                }
            )
        return records

    def preference_records(self) -> list[dict]:
        """One (prompt, chosen, rejected) record per annotator choice, by task then annotator."""
        records = []
        for task in self.preference_tasks():
            for annotator_id in sorted(task.choices):
                choice, timestamp = task.choices[annotator_id]
                chosen = task.answer_a if choice == "A" else task.answer_b
                rejected = task.answer_b if choice == "A" else task.answer_a
                records.append(
                    {
                        "prompt": task.generation_prompt,
                        "chosen": chosen,
                        "rejected": rejected,
                        "annotator_id": annotator_id,
                        "created_at": timestamp,
                    }
                )
        return records

    def qrels_records(self) -> list[dict]:
        records = []
        for task in self.relevance_tasks():
            relevant = [c for c in task.candidate_ids if task.labels.get(c) == "relevant"]
            if relevant:
                records.append(
                    {"query_id": task.query_id, "query": task.query, "relevant": relevant}
                )
        return records

    def _export(self, records: Iterable[dict], path, header: str) -> int:
        records = list(records)
        if not records:
            logger.warning("export %s: no completed tasks; writing empty file", header)
        return write_records(path, records, header=header)

    def export_labeled_queries(self, path) -> int:
        return self._export(self.labeled_query_records(), path, "policyrag labeled queries v1")

    def export_preferences(self, path) -> int:
        return self._export(self.preference_records(), path, "policyrag preference pairs v1")

    def export_qrels(self, path) -> int:
        return self._export(self.qrels_records(), path, "policyrag qrels v1")
