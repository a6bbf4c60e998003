"""HTTP annotation service: exposes each round's selected utterances as
translation tasks and collects human translations.

State is an append-only event log per session (one JSONL file under
``<run_dir>/annotations/``), replayed on startup, so a crash or restart never
loses an acknowledged write. Authentication is a single shared bearer token.

Endpoints (JSON bodies, errors as {"error", "detail"}):

    POST /v1/sessions                        create (idempotent per round)
    GET  /v1/sessions                        list summaries
    GET  /v1/sessions/{sid}                  full session
    PUT  /v1/sessions/{sid}/items/{item_id}  submit/overwrite a translation
    POST /v1/sessions/{sid}/complete         close; writes ht/round_q.jsonl
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

from fastapi import Depends, FastAPI, Header, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

__all__ = ["create_app", "SessionStore"]


class ItemPayload(BaseModel):
    item_id: str
    source_text: str
    lf_display: str


class CreateSessionPayload(BaseModel):
    round: int
    items: list[ItemPayload]


class TranslationPayload(BaseModel):
    translation: str
    translator: Optional[str] = None


@dataclass
class Item:
    item_id: str
    source_text: str
    lf_display: str
    translation: Optional[str] = None
    translator: Optional[str] = None
    updated_at: Optional[float] = None
    seq: int = 0

    def to_json(self) -> dict:
        return {
            "item_id": self.item_id,
            "source_text": self.source_text,
            "lf_display": self.lf_display,
            "translation": self.translation,
            "translator": self.translator,
            "updated_at": self.updated_at,
        }


@dataclass
class Session:
    session_id: str
    round: int
    items: dict[str, Item]
    status: str = "open"  # "open" | "complete"
    next_seq: int = 1
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def n_translated(self) -> int:
        return sum(1 for it in self.items.values() if it.translation)

    def missing_items(self) -> list[str]:
        return [k for k, it in self.items.items() if not it.translation]

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "round": self.round,
            "status": self.status,
            "items": [it.to_json() for it in self.items.values()],
        }

    def summary(self) -> dict:
        return {
            "session_id": self.session_id,
            "round": self.round,
            "status": self.status,
            "n_items": len(self.items),
            "n_translated": self.n_translated(),
        }


class SessionStore:
    """Event-sourced session registry bound to one run directory."""

    def __init__(self, run_dir: str, target_language: str | None = None):
        self.run_dir = run_dir
        self.events_dir = os.path.join(run_dir, "annotations")
        os.makedirs(self.events_dir, exist_ok=True)
        os.makedirs(os.path.join(run_dir, "ht"), exist_ok=True)
        self.sessions: dict[str, Session] = {}
        self.registry_lock = threading.Lock()
        self.target_language = target_language or self._detect_language()
        self._replay()

    def _detect_language(self) -> str:
        world = os.path.join(self.run_dir, "world.json")
        if os.path.exists(world):
            with open(world, "r", encoding="utf-8") as fh:
                return json.load(fh).get("target_language", "tgt")
        return "tgt"

    # -- event log --

    def _events_path(self, session_id: str) -> str:
        return os.path.join(self.events_dir, f"{session_id}.events.jsonl")

    def _append_event(self, session_id: str, event: dict) -> None:
        with open(self._events_path(session_id), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _replay(self) -> None:
        for name in sorted(os.listdir(self.events_dir)):
            if not name.endswith(".events.jsonl"):
                continue
            with open(os.path.join(self.events_dir, name), "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        self._apply(json.loads(line))

    def _apply(self, event: dict) -> None:
        kind = event["event"]
        if kind == "created":
            items = {
                it["item_id"]: Item(
                    item_id=it["item_id"],
                    source_text=it["source_text"],
                    lf_display=it["lf_display"],
                )
                for it in event["items"]
            }
            self.sessions[event["session_id"]] = Session(
                session_id=event["session_id"], round=event["round"], items=items
            )
        elif kind == "translation":
            session = self.sessions[event["session_id"]]
            item = session.items[event["item_id"]]
            item.translation = event["translation"]
            item.translator = event.get("translator")
            item.updated_at = event["ts"]
            item.seq = event["seq"]
            session.next_seq = max(session.next_seq, event["seq"] + 1)
        elif kind == "completed":
            self.sessions[event["session_id"]].status = "complete"

    # -- operations --

    def create_session(self, round_q: int, items: list[ItemPayload]) -> tuple[Session, bool]:
        if not items:
            raise HTTPException(400, detail="items must be non-empty")
        ids = [it.item_id for it in items]
        if len(set(ids)) != len(ids):
            raise HTTPException(400, detail="duplicate item ids")
        session_id = f"round-{round_q}"
        with self.registry_lock:
            existing = self.sessions.get(session_id)
            if existing is not None:
                same = [
                    (it.item_id, it.source_text, it.lf_display) for it in items
                ] == [
                    (it.item_id, it.source_text, it.lf_display)
                    for it in existing.items.values()
                ]
                if not same:
                    raise HTTPException(
                        409,
                        detail=f"session {session_id} exists with different items",
                    )
                return existing, False
            self._append_event(
                session_id,
                {
                    "event": "created",
                    "session_id": session_id,
                    "round": round_q,
                    "items": [it.model_dump() for it in items],
                    "ts": time.time(),
                },
            )
            session = Session(
                session_id=session_id,
                round=round_q,
                items={
                    it.item_id: Item(
                        item_id=it.item_id,
                        source_text=it.source_text,
                        lf_display=it.lf_display,
                    )
                    for it in items
                },
            )
            self.sessions[session_id] = session
            return session, True

    def get(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(404, detail=f"no session {session_id}")
        return session

    def submit(
        self, session_id: str, item_id: str, payload: TranslationPayload
    ) -> Item:
        session = self.get(session_id)
        with session.lock:
            if session.status == "complete":
                raise HTTPException(
                    409, detail=f"session {session_id} is complete and immutable"
                )
            item = session.items.get(item_id)
            if item is None:
                raise HTTPException(404, detail=f"no item {item_id} in {session_id}")
            text = payload.translation.strip()
            if not text:
                raise HTTPException(400, detail="translation must be non-empty")
            seq = session.next_seq
            session.next_seq += 1
            ts = time.time()
            self._append_event(
                session_id,
                {
                    "event": "translation",
                    "session_id": session_id,
                    "item_id": item_id,
                    "translation": text,
                    "translator": payload.translator,
                    "ts": ts,
                    "seq": seq,
                },
            )
            item.translation = text
            item.translator = payload.translator
            item.updated_at = ts
            item.seq = seq
            return item

    def complete(self, session_id: str) -> str:
        session = self.get(session_id)
        with session.lock:
            if session.status == "complete":
                return self._ht_path(session)
            missing = session.missing_items()
            if missing:
                raise HTTPException(
                    409,
                    detail=f"untranslated items remain: {', '.join(missing)}",
                )
            path = self._ht_path(session)
            with open(path, "w", encoding="utf-8") as fh:
                for item in session.items.values():
                    fh.write(
                        json.dumps(
                            {
                                "id": f"{item.item_id}__ht",
                                "lang": self.target_language,
                                "text": item.translation,
                                "lf": item.lf_display,
                                "origin": "human_translated",
                            }
                        )
                        + "\n"
                    )
                fh.flush()
                os.fsync(fh.fileno())
            self._append_event(
                session_id,
                {"event": "completed", "session_id": session_id, "ts": time.time()},
            )
            session.status = "complete"
            return path

    def _ht_path(self, session: Session) -> str:
        return os.path.join(self.run_dir, "ht", f"round_{session.round}.jsonl")


def create_app(
    run_dir: str, token: str, target_language: str | None = None
) -> FastAPI:
    store = SessionStore(run_dir, target_language=target_language)
    app = FastAPI(title="translation annotation service")
    app.state.store = store

    def authorized(authorization: str = Header(default="")) -> None:
        if authorization != f"Bearer {token}":
            raise HTTPException(401, detail="missing or invalid bearer token")

    @app.exception_handler(HTTPException)
    async def on_http_error(request: Request, exc: HTTPException):
        names = {400: "validation", 401: "unauthorized", 404: "not_found", 409: "conflict"}
        return JSONResponse(
            status_code=exc.status_code,
            content={
                "error": names.get(exc.status_code, "error"),
                "detail": exc.detail,
            },
        )

    @app.post("/v1/sessions", dependencies=[Depends(authorized)])
    def create_session(payload: CreateSessionPayload):
        session, created = store.create_session(payload.round, payload.items)
        return JSONResponse(
            status_code=201 if created else 200, content=session.to_json()
        )

    @app.get("/v1/sessions", dependencies=[Depends(authorized)])
    def list_sessions():
        with store.registry_lock:
            sessions = sorted(store.sessions.values(), key=lambda s: s.round)
            return {"sessions": [s.summary() for s in sessions]}

    @app.get("/v1/sessions/{session_id}", dependencies=[Depends(authorized)])
    def get_session(session_id: str):
        return store.get(session_id).to_json()

    @app.put(
        "/v1/sessions/{session_id}/items/{item_id}",
        dependencies=[Depends(authorized)],
    )
    def submit_translation(session_id: str, item_id: str, payload: TranslationPayload):
        return store.submit(session_id, item_id, payload).to_json()

    @app.post(
        "/v1/sessions/{session_id}/complete", dependencies=[Depends(authorized)]
    )
    def complete_session(session_id: str):
        path = store.complete(session_id)
        return {"session_id": session_id, "status": "complete", "ht_file": path}

    return app
