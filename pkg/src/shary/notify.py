"""Notification delivery.

Notification records are created inside command handlers (deterministic
state); this worker only performs the outward webhook deliveries and writes
the outcome back as a notification.delivered event, so replay reproduces
the exact same records without re-calling anyone's webhook. Log and
email-stub channels deliver at creation time and never reach this worker.

Webhook deliveries are attempted at most 3 times; failures are recorded,
not retried further.
"""

from __future__ import annotations

import logging
from typing import Callable, TYPE_CHECKING

if TYPE_CHECKING:
    from .core import Core

log = logging.getLogger(__name__)

MAX_ATTEMPTS = 3

Transport = Callable[[str, dict], bool]  # (url, payload) -> delivered?


def _default_transport(url: str, payload: dict) -> bool:
    import httpx

    try:
        response = httpx.post(url, json=payload, timeout=5.0)
        return response.status_code < 400
    except httpx.HTTPError:
        return False


class DeliveryWorker:
    def __init__(self, core: "Core", transport: Transport | None = None):
        self.core = core
        self.transport = transport or _default_transport

    def run_once(self) -> int:
        """Attempt every undelivered webhook notification once per call,
        giving up (delivered=false on record) after MAX_ATTEMPTS."""
        delivered = 0
        pending = [
            n
            for n in self.core.store.notifications
            if n.channel == "webhook" and not n.delivered and n.attempts < MAX_ATTEMPTS
        ]
        for note in pending:
            url = self.core.store.users.get(note.user, {}).get("webhook_url", "")
            ok = bool(url) and self.transport(url, note.to_doc())
            self.core.execute(
                "notification.delivered",
                {"id": note.id, "ok": ok, "attempts": note.attempts + 1},
                actor="notifier",
            )
            if ok:
                delivered += 1
            else:
                log.warning("webhook delivery failed for %s (attempt %d)", note.id, note.attempts)
        return delivered

    def drain(self) -> None:
        """Keep attempting until every webhook notification is delivered or
        out of attempts."""
        for _ in range(MAX_ATTEMPTS):
            if self.run_once() == 0 and not self._has_pending():
                return

    def _has_pending(self) -> bool:
        return any(
            n.channel == "webhook" and not n.delivered and n.attempts < MAX_ATTEMPTS
            for n in self.core.store.notifications
        )
