"""JSON-over-HTTP API for live protocol sessions.

Sessions persist as append-only log files (one per session id) in the
configured data directory; a restart recovers every session by replaying
its log through a fresh engine. Per-session writes are serialized by a
non-blocking lock: of two concurrent word posts one gets the step, the
other an immediate 409 with a retry hint. Reads take no lock; they see
the last committed step.
"""

from __future__ import annotations

import json
import logging
import secrets
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import __version__
from .classes import PatientClass, UnknownClassError
from .game import (
    DEFAULT_CLASS_PARAMS,
    DEFAULT_SHAPE,
    ClassParams,
    GameShape,
    GameModelError,
    Pdfa,
    build_match_items,
    parse_word,
)
from .protocol import (
    DEFAULT_PROFILE,
    BeliefProfile,
    ProtocolConfig,
    ProtocolError,
    ProtocolSession,
    SessionStoppedError,
    protocol_step,
    sample_belief_curves,
    start_session,
)
from .sessionlog import SessionLogError, dump_record, replay_records, step_record
from .tracelogic import DEFAULT_STOP_CONFIG, StopConfig

log = logging.getLogger(__name__)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _round9(value: Any) -> Any:
    """Limit serialized numbers to 9 significant decimals."""
    if isinstance(value, float):
        return float(f"{value:.9g}")
    if isinstance(value, dict):
        return {k: _round9(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round9(v) for v in value]
    return value


def _error(status: int, code: str, message: str, detail: Any = None) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"code": code, "message": message, "detail": detail},
    )


@dataclass
class _Entry:
    session: ProtocolSession
    created: str
    updated: str
    lock: threading.Lock


class SessionStore:
    """In-memory session map backed by per-session append-only logs."""

    def __init__(self, config: ProtocolConfig, data_dir: Path | None):
        self.config = config
        self.data_dir = data_dir
        self._entries: dict[str, _Entry] = {}
        self._create_lock = threading.Lock()
        if data_dir is not None:
            data_dir.mkdir(parents=True, exist_ok=True)
            self._recover()

    def _path(self, session_id: str) -> Path:
        assert self.data_dir is not None
        return self.data_dir / f"{session_id}.jsonl"

    def _recover(self) -> None:
        for path in sorted(self.data_dir.glob("*.jsonl")):
            try:
                lines = [json.loads(l) for l in path.read_text().splitlines() if l.strip()]
                if not lines or "id" not in lines[0]:
                    raise SessionLogError("missing header line")
                header, steps = lines[0], lines[1:]
                hypothesis = PatientClass.from_code(str(header["hypothesis"]))
                if steps:
                    session = replay_records(steps, self.config, verify=True)
                    if session.hypothesis is not hypothesis:
                        raise SessionLogError("header hypothesis disagrees with first step")
                    updated = str(steps[-1].get("at", header.get("created", _now())))
                else:
                    session = start_session(hypothesis, self.config)
                    updated = str(header.get("created", _now()))
                self._entries[str(header["id"])] = _Entry(
                    session=session,
                    created=str(header.get("created", _now())),
                    updated=updated,
                    lock=threading.Lock(),
                )
            except (SessionLogError, ProtocolError, GameModelError,
                    UnknownClassError, KeyError, ValueError) as exc:
                log.warning("skipping unreadable session log %s: %s", path, exc)

    def create(self, hypothesis: PatientClass) -> tuple[str, _Entry]:
        session_id = secrets.token_urlsafe(16)
        entry = _Entry(
            session=start_session(hypothesis, self.config),
            created=_now(),
            updated=_now(),
            lock=threading.Lock(),
        )
        with self._create_lock:
            self._entries[session_id] = entry
        if self.data_dir is not None:
            header = {"id": session_id, "hypothesis": hypothesis.code, "created": entry.created}
            self._path(session_id).write_text(dump_record(header) + "\n")
        return session_id, entry

    def get(self, session_id: str) -> _Entry | None:
        return self._entries.get(session_id)

    def ids(self) -> list[str]:
        return list(self._entries)

    def step(self, session_id: str, entry: _Entry, word) -> ProtocolSession:
        """Apply one word under the session's single-writer lock."""
        session = protocol_step(entry.session, word, self.config)
        now = _now()
        if self.data_dir is not None:
            record = step_record(session.steps[-1], session.stop)
            record["at"] = now
            with open(self._path(session_id), "a") as fh:
                fh.write(dump_record(record) + "\n")
        entry.session = session
        entry.updated = now
        return session


class CreateSessionBody(BaseModel):
    hypothesis: str


class WordsBody(BaseModel):
    actions: str


def session_resource(session_id: str, entry: _Entry) -> dict:
    session = entry.session
    return _round9({
        "id": session_id,
        "hypothesis": session.hypothesis.code,
        "current_test": session.current_test.test_name,
        "steps": [
            {
                "meta_state": step.meta_state.test_name,
                "word": "".join(a.value for a in step.word),
                "delta": step.delta,
                "beliefs": step.beliefs.as_dict(),
                "chosen": step.chosen.code,
            }
            for step in session.steps
        ],
        "class_trace": [c.code for c in session.class_trace],
        "stop": session.stop.to_dict(),
        "created": entry.created,
        "updated": entry.updated,
    })


def create_app(
    data_dir: Path | None = None,
    shape: GameShape = DEFAULT_SHAPE,
    class_params: Mapping[PatientClass, ClassParams] | None = None,
    profile: BeliefProfile = DEFAULT_PROFILE,
    stop: StopConfig = DEFAULT_STOP_CONFIG,
    cors_origins: tuple[str, ...] = ("*",),
) -> FastAPI:
    params = dict(class_params or DEFAULT_CLASS_PARAMS)
    models: dict[PatientClass, Pdfa] = {
        cls: build_match_items(p, shape) for cls, p in params.items()
    }
    config = ProtocolConfig(profile=profile, models=models, stop=stop)
    store = SessionStore(config, data_dir)

    app = FastAPI(title="cogproto service", version=__version__)
    app.state.store = store
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def malformed_request(request: Request, exc: RequestValidationError):
        return _error(422, "invalid_request", "malformed request body", exc.errors())

    @app.post("/api/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        try:
            hypothesis = PatientClass.from_code(body.hypothesis)
        except UnknownClassError as exc:
            return _error(400, "unknown_class", str(exc))
        session_id, entry = store.create(hypothesis)
        return session_resource(session_id, entry)

    @app.get("/api/sessions")
    def list_sessions():
        return {"sessions": store.ids()}

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        entry = store.get(session_id)
        if entry is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        return session_resource(session_id, entry)

    @app.post("/api/sessions/{session_id}/words")
    def post_word(session_id: str, body: WordsBody):
        entry = store.get(session_id)
        if entry is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        if not entry.lock.acquire(blocking=False):
            return _error(
                409, "session_busy",
                "another update to this session is in progress",
                "retry after the concurrent request finishes",
            )
        try:
            if entry.session.stop.stopped:
                return _error(
                    409, "session_stopped",
                    f"session stopped ({entry.session.stop.reason.value})",
                    entry.session.stop.to_dict(),
                )
            try:
                word = parse_word(body.actions)
                store.step(session_id, entry, word)
            except SessionStoppedError as exc:
                return _error(409, "session_stopped", str(exc))
            except (GameModelError, ProtocolError) as exc:
                return _error(422, "invalid_word", str(exc))
        finally:
            entry.lock.release()
        return session_resource(session_id, entry)

    @app.get("/api/curves/{test_name}")
    def get_curves(test_name: str, step: float = 0.01):
        try:
            cls = PatientClass.from_test_name(test_name)
        except UnknownClassError:
            return _error(404, "unknown_test", f"no test {test_name!r}")
        if not 0.0 < step <= profile.weights.m:
            return _error(422, "invalid_step", f"step must be in (0, {profile.weights.m}]")
        rows = sample_belief_curves(profile, cls, step)
        return _round9({
            "test": cls.test_name,
            "step": step,
            "max_score": profile.weights.m,
            "rows": [
                {"delta": r.delta, "h": r.healthy, "m": r.mild, "M": r.major}
                for r in rows
            ],
        })

    @app.get("/api/models")
    def get_models():
        return _round9({
            "classes": {
                cls.code: {
                    "alpha": p.p_alpha,
                    "beta": p.p_beta,
                    "gamma": p.p_gamma,
                    "theta": p.p_theta,
                }
                for cls, p in params.items()
            },
            "shape": {"rounds": shape.rounds, "step_cap": shape.step_cap},
        })

    return app
