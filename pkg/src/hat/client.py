"""HTTP client for the annotation service, and the human-mode translation
provider the selection loop blocks on."""

from __future__ import annotations

import time
from typing import Sequence

import httpx

from .core import Example, LogicalForm, Origin, Utterance
from .loop import RoundSuspended

__all__ = ["AnnotationClient", "HumanServiceHt"]


class AnnotationClient:
    def __init__(self, base_url: str, token: str, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(
            headers={"Authorization": f"Bearer {token}"}, timeout=timeout
        )

    def _check(self, response: httpx.Response) -> dict:
        if response.status_code >= 400:
            try:
                payload = response.json()
            except ValueError:
                payload = {"error": "http", "detail": response.text}
            raise RuntimeError(
                f"annotation service {response.status_code}: {payload.get('detail')}"
            )
        return response.json()

    def create_session(self, round_q: int, items: list[dict]) -> dict:
        return self._check(
            self._client.post(
                f"{self.base_url}/v1/sessions",
                json={"round": round_q, "items": items},
            )
        )

    def list_sessions(self) -> list[dict]:
        return self._check(self._client.get(f"{self.base_url}/v1/sessions"))["sessions"]

    def get_session(self, session_id: str) -> dict:
        return self._check(
            self._client.get(f"{self.base_url}/v1/sessions/{session_id}")
        )

    def submit(
        self,
        session_id: str,
        item_id: str,
        translation: str,
        translator: str | None = None,
    ) -> dict:
        return self._check(
            self._client.put(
                f"{self.base_url}/v1/sessions/{session_id}/items/{item_id}",
                json={"translation": translation, "translator": translator},
            )
        )

    def complete(self, session_id: str) -> dict:
        return self._check(
            self._client.post(f"{self.base_url}/v1/sessions/{session_id}/complete")
        )

    def close(self) -> None:
        self._client.close()


class HumanServiceHt:
    """Round translation provider backed by real annotators.

    Creates (or re-attaches to) the round's session, then polls until the
    session completes. A timeout raises RoundSuspended; re-running the round
    reproduces the same selection and waits on the same session.
    """

    def __init__(
        self,
        client: AnnotationClient,
        target_language: str = "tgt",
        poll_interval: float = 2.0,
        timeout: float | None = None,
    ):
        self.client = client
        self.target_language = target_language
        self.poll_interval = poll_interval
        self.timeout = timeout

    def __call__(self, q: int, chosen: Sequence[Example]) -> list[Example]:
        items = [
            {
                "item_id": ex.utterance.id,
                "source_text": ex.utterance.raw,
                "lf_display": ex.lf.canonical,
            }
            for ex in chosen
        ]
        session = self.client.create_session(q, items)
        session_id = session["session_id"]
        deadline = None if self.timeout is None else time.monotonic() + self.timeout
        while session["status"] != "complete":
            if deadline is not None and time.monotonic() > deadline:
                raise RoundSuspended(
                    f"round {q} still awaiting translations in session {session_id}"
                )
            time.sleep(self.poll_interval)
            session = self.client.get_session(session_id)

        by_item = {it["item_id"]: it for it in session["items"]}
        lf_by_id: dict[str, LogicalForm] = {
            ex.utterance.id: ex.lf for ex in chosen
        }
        out = []
        for ex in chosen:
            item = by_item[ex.utterance.id]
            try:
                utt = Utterance.from_raw(
                    f"{ex.utterance.id}__ht", self.target_language, item["translation"]
                )
            except ValueError as exc:
                raise RuntimeError(
                    f"item {ex.utterance.id}: translation "
                    f"{item['translation']!r} has no tokens"
                ) from exc
            out.append(
                Example(
                    utterance=utt,
                    lf=lf_by_id[ex.utterance.id],
                    origin=Origin.HUMAN_TRANSLATED,
                )
            )
        return out
