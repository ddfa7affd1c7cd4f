"""Human-oracle bridge: per-episode sessions that hold a pending question
until a human answers it over HTTP.

The engine blocks inside post_question; the console polls session state
and POSTs answers. One pending question per session at any time.
"""

from __future__ import annotations

import itertools
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

from .agents import AgentConfig, AgentError, Oracle, OracleRequest

DEFAULT_HUMAN_TIMEOUT = 300.0  # seconds per question

STATE_IDLE = "idle"
STATE_AWAITING = "awaiting_answer"
STATE_DONE = "done"


class ConflictError(Exception):
    """Answer submitted while no question is pending."""


@dataclass
class Session:
    id: str
    episode_id: str
    target_image: bytes
    description: str
    pending_question: Optional[str] = None
    transcript: list[tuple[str, str]] = field(default_factory=list)
    state: str = STATE_IDLE
    progress: Optional[str] = None


class SessionManager:
    def __init__(self):
        self._sessions: dict[str, Session] = {}
        self._cond = threading.Condition()
        self._counter = itertools.count(1)
        self._answers: dict[str, str] = {}

    def open_session(self, episode_id: str, target_image: bytes, description: str) -> Session:
        with self._cond:
            sid = f"s{next(self._counter)}"
            session = Session(id=sid, episode_id=episode_id,
                              target_image=target_image, description=description)
            self._sessions[sid] = session
            return session

    def _get(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise KeyError(f"no session {session_id!r}")
        return session

    def post_question(self, session_id: str, question: str,
                      timeout: float = DEFAULT_HUMAN_TIMEOUT) -> str:
        """Publish a question and block until the console submits an answer."""
        with self._cond:
            session = self._get(session_id)
            if session.state != STATE_IDLE:
                raise ConflictError(f"session {session_id} is {session.state}")
            session.pending_question = question
            session.state = STATE_AWAITING
            self._cond.notify_all()
            deadline = time.monotonic() + timeout
            while session_id not in self._answers:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    session.pending_question = None
                    session.state = STATE_IDLE
                    raise TimeoutError(f"no answer within {timeout:g}s")
                self._cond.wait(timeout=remaining)
            return self._answers.pop(session_id)

    def submit_answer(self, session_id: str, answer: str) -> None:
        with self._cond:
            session = self._get(session_id)
            if session.state != STATE_AWAITING or session.pending_question is None:
                raise ConflictError(f"session {session_id} has no pending question")
            session.transcript.append((session.pending_question, answer))
            self._answers[session_id] = answer
            session.pending_question = None
            session.state = STATE_IDLE
            self._cond.notify_all()

    def close_session(self, session_id: str) -> None:
        with self._cond:
            session = self._get(session_id)
            session.pending_question = None
            session.state = STATE_DONE
            self._cond.notify_all()

    def session_state(self, session_id: str) -> dict:
        """Console view: target, description, pending question, transcript.
        The questioner's reasoning is never exposed here."""
        with self._cond:
            session = self._get(session_id)
            return {
                "id": session.id,
                "episode_id": session.episode_id,
                "description": session.description,
                "pending_question": session.pending_question,
                "state": session.state,
                "transcript": [[q, a] for q, a in session.transcript],
                "progress": session.progress,
            }

    def list_sessions(self) -> list[dict]:
        with self._cond:
            return [
                {"id": s.id, "episode_id": s.episode_id, "state": s.state}
                for s in self._sessions.values()
            ]

    def target_image(self, session_id: str) -> bytes:
        with self._cond:
            return self._get(session_id).target_image


class HumanOracle(Oracle):
    """Oracle backed by a live human answering through the bridge."""

    def __init__(self, config: AgentConfig, manager: SessionManager):
        super().__init__(config)
        self.manager = manager
        self.timeout = config.params.get("human_timeout", DEFAULT_HUMAN_TIMEOUT)
        self._session: Optional[Session] = None

    def begin_episode(self, episode_id: str, target_image: bytes, description: str) -> None:
        self._session = self.manager.open_session(episode_id, target_image, description)

    def end_episode(self) -> None:
        if self._session is not None:
            self.manager.close_session(self._session.id)
            self._session = None

    def answer(self, req: OracleRequest) -> tuple[str, float]:
        if self._session is None:
            raise AgentError("human oracle has no open session")
        try:
            # human latency is interactive, not model cost; report zero
            return self.manager.post_question(self._session.id, req.question,
                                              timeout=self.timeout), 0.0
        except TimeoutError as exc:
            raise AgentError(f"oracle timeout: {exc}") from exc


def build_app(manager: SessionManager, token: Optional[str] = None,
              static_dir: Optional[str] = None):
    """HTTP JSON API consumed by the oracle console."""
    from fastapi import Body, FastAPI, Header, HTTPException, Response

    app = FastAPI(title="oracle-bridge")

    def check_token(x_auth_token: Optional[str]) -> None:
        if token and x_auth_token != token:
            raise HTTPException(status_code=401, detail="bad token")

    @app.get("/api/sessions")
    def list_sessions(x_auth_token: Optional[str] = Header(default=None)):
        check_token(x_auth_token)
        return manager.list_sessions()

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str, x_auth_token: Optional[str] = Header(default=None)):
        check_token(x_auth_token)
        try:
            return manager.session_state(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="no such session")

    @app.post("/api/sessions/{session_id}/answer")
    def answer(session_id: str, answer: str = Body(embed=True),
               x_auth_token: Optional[str] = Header(default=None)):
        check_token(x_auth_token)
        if not answer.rstrip():
            raise HTTPException(status_code=400, detail="empty answer")
        try:
            manager.submit_answer(session_id, answer.rstrip())
        except KeyError:
            raise HTTPException(status_code=404, detail="no such session")
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"ok": True}

    @app.get("/api/sessions/{session_id}/target.png")
    def target_png(session_id: str, x_auth_token: Optional[str] = Header(default=None)):
        check_token(x_auth_token)
        try:
            data = manager.target_image(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="no such session")
        return Response(content=data, media_type="image/png")

    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")
    return app
