"""HTTP API over the annotation store and the answering pipeline.

Endpoints:
  POST /query                {question, k?}            -> grounded answer
  GET  /tasks/relevance      ?state=open|in_progress|complete
  GET  /tasks/preference     ?state=open|complete|failed
  POST /labels               {task_id, payload, annotator_id, client_token?}
  GET  /export/labeled-queries | /export/preferences | /export/qrels
  GET  /healthz

Export endpoints return the JSONL file bodies byte-for-byte as the CLI
export command writes them, so HTTP and file consumers see one format.
"""

from __future__ import annotations

import io
import json

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from .annotation import AnnotationError, AnnotationStore
from .gateway import GatewayError
from .pipeline import DEFAULT_CONTEXT_CHAR_BUDGET, answer
from .retriever import LateInteractionIndex, RetrieverError


class QueryRequest(BaseModel):
    question: str
    k: int = 20


class LabelRequest(BaseModel):
    task_id: str
    payload: dict
    annotator_id: str
    client_token: str | None = None


def _jsonl(records: list[dict], header: str) -> str:
    buffer = io.StringIO()
    buffer.write(f"# {header}\n")
    for record in records:
        buffer.write(json.dumps(record, ensure_ascii=False) + "\n")
    return buffer.getvalue()


def create_app(
    store: AnnotationStore,
    index: LateInteractionIndex | None = None,
    llm_backend: str = "mock",
    preset: str = "detailed",
    char_budget: int = DEFAULT_CONTEXT_CHAR_BUDGET,
) -> FastAPI:
    app = FastAPI(title="policyrag workbench")

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    @app.post("/query")
    def run_query(request: QueryRequest) -> dict:
        if index is None:
            raise HTTPException(status_code=503, detail="no index loaded")
        try:
            grounded = answer(
                index,
                request.question,
                llm_backend,
                k=request.k,
                preset=preset,
                char_budget=char_budget,
            )
        except RetrieverError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except GatewayError as exc:
            raise HTTPException(status_code=502, detail=str(exc)) from exc
        return grounded.to_dict()

    @app.get("/tasks/relevance")
    def relevance_tasks(state: str | None = None) -> dict:
        return {"tasks": [t.to_dict() for t in store.relevance_tasks(state)]}

    @app.get("/tasks/preference")
    def preference_tasks(state: str | None = None) -> dict:
        return {"tasks": [t.to_dict() for t in store.preference_tasks(state)]}

    @app.post("/labels")
    def post_label(request: LabelRequest) -> dict:
        try:
            record = store.record_label(
                request.task_id,
                request.payload,
                request.annotator_id,
                client_token=request.client_token,
            )
        except AnnotationError as exc:
            status = 404 if "unknown task" in str(exc) else 400
            raise HTTPException(status_code=status, detail=str(exc)) from exc
        return record.to_dict()

    @app.get("/export/labeled-queries", response_class=PlainTextResponse)
    def export_labeled_queries() -> str:
        return _jsonl(store.labeled_query_records(), "policyrag labeled queries v1")

    @app.get("/export/preferences", response_class=PlainTextResponse)
    def export_preferences() -> str:
        return _jsonl(store.preference_records(), "policyrag preference pairs v1")

    @app.get("/export/qrels", response_class=PlainTextResponse)
    def export_qrels() -> str:
        return _jsonl(store.qrels_records(), "policyrag qrels v1")

    return app
