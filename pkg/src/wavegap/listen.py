"""HTTP backend for the blind listening test.

Serves blinded audio presentations, records grades durably before
acking, and exposes the unblinded aggregate only through /v1/results.
Grades persist as an append-only line-delimited log, so a killed and
restarted process keeps every acked grade; sessions are ephemeral.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel

from .evaluation import (
    GradeRecord,
    ODG_SCALE,
    append_grade,
    odg_aggregate,
    read_grades,
)
from .reconstruct import ROLE_RECONSTRUCTED, ROLE_REAL, PresentationRecord, read_eval_manifest


PROTOCOL_UNPAIRED = "unpaired"
PROTOCOL_PAIRED = "paired"


class CreateSessionBody(BaseModel):
    grader_id: str
    seed: Optional[int] = None


class SubmitGradeBody(BaseModel):
    presentation_id: str
    odg: int


class ApiError(Exception):
    """Maps to a structured JSON error payload with a machine-readable code."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class Session:
    session_id: str
    grader_id: str
    queue: tuple[str, ...]
    cursor: int = 0

    @property
    def completed(self) -> bool:
        return self.cursor >= len(self.queue)

    @property
    def current(self) -> Optional[str]:
        return None if self.completed else self.queue[self.cursor]


class ListenStore:
    """Sessions, presentations, and the durable grade log."""

    def __init__(self, manifest_path, grades_path, audio_root=None, protocol: str = PROTOCOL_UNPAIRED):
        if protocol not in (PROTOCOL_UNPAIRED, PROTOCOL_PAIRED):
            raise ValueError(f"protocol must be paired or unpaired, got {protocol!r}")
        manifest_path = Path(manifest_path)
        records = read_eval_manifest(manifest_path)
        if not records:
            raise ValueError(f"empty eval manifest: {manifest_path}")
        self.protocol = protocol
        self.audio_root = Path(audio_root) if audio_root is not None else manifest_path.parent
        self.presentations: dict[str, PresentationRecord] = {r.presentation_id: r for r in records}
        self._real_of_pair = {
            r.pair_id: r.presentation_id for r in records if r.role == ROLE_REAL
        }
        self.grades_path = Path(grades_path)
        self._grades: list[GradeRecord] = read_grades(self.grades_path)
        self._graded: set[tuple[str, str]] = {
            (g.grader_id, g.presentation_id) for g in self._grades
        }
        self._sessions: dict[str, Session] = {}
        self._session_lock = threading.Lock()
        self._grade_lock = threading.Lock()

    # -- sessions -----------------------------------------------------------

    def gradable_ids(self) -> list[str]:
        """Unpaired protocol grades reconstructions only; paired does too,
        with the real clip available as a reference for the current item."""
        return sorted(
            pid for pid, rec in self.presentations.items() if rec.role == ROLE_RECONSTRUCTED
        )

    def create_session(self, grader_id: str, seed: int | None = None) -> Session:
        if not grader_id:
            raise ApiError(422, "invalid_grader", "grader_id must be non-empty")
        ids = self.gradable_ids()
        entropy = np.random.SeedSequence() if seed is None else np.random.SeedSequence(seed)
        order = np.random.default_rng(entropy).permutation(len(ids))
        session = Session(
            session_id=uuid.uuid4().hex[:12],
            grader_id=grader_id,
            queue=tuple(ids[i] for i in order),
        )
        with self._session_lock:
            self._sessions[session.session_id] = session
        return session

    def session(self, session_id: str) -> Session:
        with self._session_lock:
            if session_id not in self._sessions:
                raise ApiError(404, "unknown_session", f"no session {session_id!r}")
            return self._sessions[session_id]

    def audio_bytes(self, presentation_id: str) -> bytes:
        rec = self.presentations[presentation_id]
        return (self.audio_root / rec.path).read_bytes()

    def reference_of(self, presentation_id: str) -> str:
        if self.protocol != PROTOCOL_PAIRED:
            raise ApiError(409, "unpaired_protocol", "reference clips are only served in paired mode")
        rec = self.presentations[presentation_id]
        return self._real_of_pair[rec.pair_id]

    # -- grading ------------------------------------------------------------

    def submit_grade(self, session_id: str, presentation_id: str, odg) -> Session:
        session = self.session(session_id)
        if session.completed:
            raise ApiError(409, "session_completed", "all presentations already graded")
        if not isinstance(odg, int) or isinstance(odg, bool) or odg not in ODG_SCALE:
            raise ApiError(422, "invalid_grade", f"odg must be one of {list(ODG_SCALE)}, got {odg!r}")
        if presentation_id != session.current:
            raise ApiError(
                409,
                "stale_presentation",
                f"grade targets {presentation_id!r} but the current item is {session.current!r}",
            )
        key = (session.grader_id, presentation_id)
        with self._grade_lock:
            if key in self._graded:
                raise ApiError(409, "already_graded", f"{key} was already graded")
            record = GradeRecord(
                grader_id=session.grader_id,
                presentation_id=presentation_id,
                odg=odg,
                timestamp=time.time(),
            )
            # Persist before acking; the fsync is the durability guarantee.
            append_grade(self.grades_path, record)
            self._grades.append(record)
            self._graded.add(key)
        session.cursor += 1
        return session

    # -- results ------------------------------------------------------------

    def results(self, group_by: str = "dataset_model") -> dict:
        if group_by not in ("dataset_model", "model", "dataset"):
            raise ApiError(422, "invalid_group_by", f"unsupported group_by {group_by!r}")
        with self._grade_lock:
            grades = list(self._grades)
        if not grades:
            return {"rows": [], "overall": [], "n_grades": 0}
        info = {pid: (rec.dataset, rec.model) for pid, rec in self.presentations.items()}
        if group_by == "dataset":
            # Fold the model axis away by keying overall on dataset instead.
            info = {pid: (d, d) for pid, (d, m) in info.items()}
        table = odg_aggregate(grades, info)
        payload = table.to_dict()
        if group_by == "model":
            payload = {"rows": [], "overall": payload["overall"]}
        payload["n_grades"] = len(grades)
        return payload


def create_app(store: ListenStore, webui_dir=None):
    """Build the FastAPI app exposing the /v1 API (and the UI bundle if given)."""
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse, Response

    app = FastAPI(title="wavegap listening test", version="1")

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status, content={"error": {"code": exc.code, "message": exc.message}}
        )

    def _session_payload(session: Session) -> dict:
        return {
            "session_id": session.session_id,
            "grader_id": session.grader_id,
            "total": len(session.queue),
            "position": session.cursor,
            "completed": session.completed,
        }

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        return _session_payload(store.create_session(body.grader_id, body.seed))

    @app.get("/v1/sessions/{session_id}")
    def session_info(session_id: str):
        return _session_payload(store.session(session_id))

    def _audio_response(pid: str, session: Session) -> Response:
        return Response(
            content=store.audio_bytes(pid),
            media_type="audio/wav",
            headers={
                "X-Presentation-Id": pid,
                "X-Position": str(session.cursor),
                "X-Total": str(len(session.queue)),
            },
        )

    @app.get("/v1/sessions/{session_id}/next")
    def next_presentation(session_id: str):
        session = store.session(session_id)
        if session.completed:
            return Response(status_code=204, headers={"X-Session-Completed": "true"})
        return _audio_response(session.current, session)

    @app.get("/v1/sessions/{session_id}/reference")
    def reference_presentation(session_id: str):
        session = store.session(session_id)
        if session.completed:
            return Response(status_code=204, headers={"X-Session-Completed": "true"})
        return _audio_response(store.reference_of(session.current), session)

    @app.post("/v1/sessions/{session_id}/grades")
    def submit_grade(session_id: str, body: SubmitGradeBody):
        session = store.submit_grade(session_id, body.presentation_id, body.odg)
        return {"recorded": True, **_session_payload(session)}

    @app.get("/v1/results")
    def results(group_by: str = "dataset_model"):
        return store.results(group_by)

    if webui_dir is not None and Path(webui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(webui_dir), html=True), name="webui")

    return app


def serve(store: ListenStore, port: int = 8000, host: str = "127.0.0.1", webui_dir=None) -> None:
    import uvicorn

    uvicorn.run(create_app(store, webui_dir=webui_dir), host=host, port=port, log_level="warning")
