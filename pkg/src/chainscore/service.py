"""HTTP annotation service for human evaluation of scored runs.

Serves annotation tasks assembled from a run's checkpoints and collects
two-phase annotations into an append-only JSONL store:

1. Blind phase: the annotator sees question, documents, statements,
   propositions, and the chain trace, and submits necessity flags per
   proposition, a connectivity judgment, transformation accuracy, and their
   own short answer. The model's short answer is not reachable through any
   response in this phase.
2. Reveal phase: only after a blind annotation with a non-empty
   annotator_answer exists may the model's short answer be revealed; the
   annotator then re-submits with equivalence_confirmed set, superseding
   the blind record.

The store is append-only; the latest record per (task, annotator) wins.
Resubmissions with a previously seen client_token are deduplicated.
"""

from __future__ import annotations

import datetime
import json
import threading
from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .model import dump_json_line
from .pipeline import load_manifest, read_jsonl


class BindError(RuntimeError):
    pass


class AnnotationSubmission(BaseModel):
    annotator_id: str = Field(min_length=1)
    necessity: dict[str, bool]
    connectivity: bool
    annotator_answer: str
    transform_accuracy: bool
    equivalence_confirmed: bool | None = None
    client_token: str | None = None


class RevealRequest(BaseModel):
    annotator_id: str = Field(min_length=1)


class AnnotationStore:
    """Append-only JSONL store with in-memory index, safe across threads."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._records: list[dict] = []
        if self.path.exists():
            self._records = read_jsonl(self.path)

    def _append(self, record: dict) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(dump_json_line(record) + "\n")
        self._records.append(record)

    def add_annotation(self, record: dict) -> dict:
        with self._lock:
            token = record.get("client_token")
            if token:
                for existing in reversed(self._records):
                    if (
                        existing.get("kind") == "annotation"
                        and existing.get("task_id") == record["task_id"]
                        and existing.get("annotator_id") == record["annotator_id"]
                        and existing.get("client_token") == token
                    ):
                        return existing
            prior = self.latest_annotation(record["task_id"], record["annotator_id"])
            record = dict(record)
            record["kind"] = "annotation"
            record["record_id"] = len(self._records)
            record["supersedes_prior"] = prior is not None
            record["created_at"] = datetime.datetime.now(
                datetime.timezone.utc
            ).isoformat()
            self._append(record)
            return record

    def add_reveal(self, task_id: str, annotator_id: str) -> None:
        with self._lock:
            self._append(
                {
                    "kind": "reveal",
                    "record_id": len(self._records),
                    "task_id": task_id,
                    "annotator_id": annotator_id,
                    "created_at": datetime.datetime.now(
                        datetime.timezone.utc
                    ).isoformat(),
                }
            )

    def latest_annotation(self, task_id: str, annotator_id: str) -> dict | None:
        for record in reversed(self._records):
            if (
                record.get("kind") == "annotation"
                and record.get("task_id") == task_id
                and record.get("annotator_id") == annotator_id
            ):
                return record
        return None

    def has_reveal(self, task_id: str, annotator_id: str) -> bool:
        return any(
            r.get("kind") == "reveal"
            and r.get("task_id") == task_id
            and r.get("annotator_id") == annotator_id
            for r in self._records
        )

    def annotated_tasks(self, annotator_id: str) -> set[str]:
        return {
            r["task_id"]
            for r in self._records
            if r.get("kind") == "annotation" and r.get("annotator_id") == annotator_id
        }

    def export_latest(self) -> list[dict]:
        latest: dict[tuple[str, str], dict] = {}
        for record in self._records:
            if record.get("kind") != "annotation":
                continue
            latest[(record["task_id"], record["annotator_id"])] = record
        return [latest[k] for k in sorted(latest)]

    def annotator_ids(self) -> list[str]:
        return sorted(
            {
                r["annotator_id"]
                for r in self._records
                if r.get("kind") == "annotation"
            }
        )


def _build_tasks(run_dir: Path) -> tuple[list[str], dict[str, dict]]:
    """Assemble annotation tasks from the run's checkpoints, input order."""
    manifest = load_manifest(run_dir)
    stages = manifest.get("stages", {})
    for required in ("instances", "generate", "transform", "chain"):
        if required not in stages or not stages[required].get("complete"):
            raise FileNotFoundError(f"run has no completed {required} stage")

    instances = {r["instance_id"]: r for r in read_jsonl(run_dir / stages["instances"]["path"])}
    generated = {r["instance_id"]: r for r in read_jsonl(run_dir / stages["generate"]["path"])}
    transformed = {r["instance_id"]: r for r in read_jsonl(run_dir / stages["transform"]["path"])}
    chained = read_jsonl(run_dir / stages["chain"]["path"])

    order: list[str] = []
    tasks: dict[str, dict] = {}
    for ch_row in chained:
        instance_id = ch_row["instance_id"]
        if ch_row.get("error"):
            continue
        instance = instances[instance_id]
        gen = generated[instance_id]
        tr = transformed[instance_id]
        result = ch_row["result"]
        task = {
            "task_id": instance_id,
            "question": instance["question"],
            "documents": instance["documents"],
            "statements": gen["answer"]["statements"],
            "propositions": tr["propositions"],
            "horn_expression": tr["horn_expression"],
            "chain": {
                "trace": result["trace"],
                "start_candidates": result["start_candidates"],
            },
        }
        order.append(instance_id)
        tasks[instance_id] = {
            "task": task,
            "model_short_answer": gen["short_answer"],
        }
    return order, tasks


def create_app(
    run_dir: str | Path,
    store_path: str | Path | None = None,
    static_dir: str | Path | None = None,
) -> FastAPI:
    run_dir = Path(run_dir)
    order, tasks = _build_tasks(run_dir)
    store = AnnotationStore(store_path or run_dir / "annotations.jsonl")

    app = FastAPI(title="chainscore annotation service")
    app.state.store = store

    def _task_or_404(task_id: str) -> dict:
        if task_id not in tasks:
            raise HTTPException(status_code=404, detail="unknown task")
        return tasks[task_id]

    @app.get("/api/tasks/next")
    def next_task(annotator: str = Query(min_length=1)) -> JSONResponse:
        done = store.annotated_tasks(annotator)
        remaining = [t for t in order if t not in done]
        if not remaining:
            return JSONResponse({"task": None, "remaining": 0})
        return JSONResponse(
            {"task": tasks[remaining[0]]["task"], "remaining": len(remaining)}
        )

    @app.get("/api/tasks/{task_id}")
    def get_task(
        task_id: str,
        phase: str = "blind",
        annotator: str | None = None,
    ) -> JSONResponse:
        entry = _task_or_404(task_id)
        if phase == "blind":
            return JSONResponse({"task": entry["task"]})
        if phase != "reveal":
            raise HTTPException(status_code=422, detail="phase must be blind or reveal")
        if not annotator:
            raise HTTPException(status_code=422, detail="reveal phase needs annotator")
        annotation = store.latest_annotation(task_id, annotator)
        if annotation is None or not str(annotation.get("annotator_answer", "")).strip():
            raise HTTPException(
                status_code=403,
                detail="reveal requires a submitted annotation with annotator_answer",
            )
        return JSONResponse(
            {
                "task": entry["task"],
                "model_short_answer": entry["model_short_answer"],
                "annotation": annotation,
            }
        )

    @app.post("/api/tasks/{task_id}/annotation")
    def post_annotation(task_id: str, submission: AnnotationSubmission) -> JSONResponse:
        entry = _task_or_404(task_id)
        labels = {p["label"] for p in entry["task"]["propositions"]}
        unknown = set(submission.necessity) - labels
        if unknown:
            raise HTTPException(
                status_code=422, detail=f"necessity references unknown labels {sorted(unknown)}"
            )
        missing = labels - set(submission.necessity)
        if missing:
            raise HTTPException(
                status_code=422, detail=f"necessity missing labels {sorted(missing)}"
            )
        if not submission.annotator_answer.strip():
            raise HTTPException(status_code=422, detail="annotator_answer must be non-empty")
        if submission.equivalence_confirmed is not None and not store.has_reveal(
            task_id, submission.annotator_id
        ):
            raise HTTPException(
                status_code=403,
                detail="equivalence_confirmed is only valid after reveal",
            )
        record = store.add_annotation(
            {
                "task_id": task_id,
                "annotator_id": submission.annotator_id,
                "necessity": submission.necessity,
                "connectivity": submission.connectivity,
                "annotator_answer": submission.annotator_answer,
                "transform_accuracy": submission.transform_accuracy,
                "equivalence_confirmed": submission.equivalence_confirmed,
                "client_token": submission.client_token,
            }
        )
        return JSONResponse({"record_id": record["record_id"]})

    @app.post("/api/tasks/{task_id}/reveal")
    def post_reveal(task_id: str, request: RevealRequest) -> JSONResponse:
        entry = _task_or_404(task_id)
        annotation = store.latest_annotation(task_id, request.annotator_id)
        if annotation is None or not str(annotation.get("annotator_answer", "")).strip():
            raise HTTPException(
                status_code=403,
                detail="reveal requires a submitted annotation with annotator_answer",
            )
        store.add_reveal(task_id, request.annotator_id)
        return JSONResponse(
            {
                "model_short_answer": entry["model_short_answer"],
                "annotator_answer": annotation["annotator_answer"],
            }
        )

    @app.get("/api/export.jsonl")
    def export_jsonl() -> PlainTextResponse:
        body = "".join(dump_json_line(r) + "\n" for r in store.export_latest())
        return PlainTextResponse(body, media_type="application/jsonl")

    @app.get("/api/progress")
    def progress() -> JSONResponse:
        annotators = {}
        for annotator_id in store.annotator_ids():
            records = [
                store.latest_annotation(t, annotator_id)
                for t in store.annotated_tasks(annotator_id)
            ]
            confirmed = sum(
                1 for r in records if r and r.get("equivalence_confirmed") is not None
            )
            annotators[annotator_id] = {
                "completed": len(records),
                "confirmed": confirmed,
            }
        return JSONResponse({"total": len(order), "annotators": annotators})

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def serve_annotation_api(
    run_dir: str | Path,
    bind: str = "127.0.0.1:8765",
    store_path: str | Path | None = None,
    static_dir: str | Path | None = None,
) -> None:
    """Run the service under uvicorn; raises BindError when the port is taken."""
    import socket

    import uvicorn

    host, _, port_text = bind.partition(":")
    if not host or not port_text.isdigit():
        raise BindError(f"bind must look like host:port, got {bind!r}")
    port = int(port_text)

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        probe.bind((host, port))
    except OSError as exc:
        raise BindError(f"cannot bind {bind}: {exc}") from exc
    finally:
        probe.close()

    app = create_app(run_dir, store_path=store_path, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
