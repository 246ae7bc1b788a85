"""Reconciliation broker: converge driver access state to the reservations.

The desired grant set is a pure function of the reservation store at an
instant; reconciliation is plain set difference on (user, resource, unit)
identity. A revoked holder's lingering session gets a grace period (default
5 minutes) and is then terminated best-effort. One worker runs per driver;
workers share nothing, read the store through snapshots keyed by the event
sequence number, and submit their actions as ordinary commands so the whole
convergence history lands in the event log.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

from .drivers import DriverAction, GrantKey
from .errors import DriverUnreachable

if TYPE_CHECKING:
    from .core import Core
    from .scheduler import Reservation

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AccessGrant:
    user: str
    resource: str
    unit: int
    # The validity interval is payload, not identity: truncating a
    # reservation must not read as revoke-then-grant for the same holder.
    start: int = field(compare=False, default=0)
    end: int = field(compare=False, default=0)

    def key(self) -> GrantKey:
        return (self.user, self.resource, self.unit)

    def to_doc(self) -> dict:
        return {
            "user": self.user,
            "resource": self.resource,
            "unit": self.unit,
            "start": self.start,
            "end": self.end,
        }


def desired_state(now: int, reservations: Iterable["Reservation"]) -> set[AccessGrant]:
    """One grant per (reservation, unit) whose holder should have access at
    `now`: active reservations, plus confirmed ones past their start edge."""
    grants: set[AccessGrant] = set()
    for rsv in reservations:
        if rsv.state not in ("active", "confirmed"):
            continue
        if not (rsv.start <= now < rsv.effective_end()):
            continue
        for unit in rsv.units:
            grants.add(
                AccessGrant(rsv.user, rsv.resource, unit, rsv.start, rsv.effective_end())
            )
    return grants


def reconcile(
    observed: Iterable[AccessGrant],
    desired: Iterable[AccessGrant],
    now: int,
    revoked_at: dict[GrantKey, int] | None = None,
    sessions: Iterable[GrantKey] = (),
    grace: int = 5,
) -> list[DriverAction]:
    """Actions converging `observed` to `desired`.

    Applying the returned actions and reconciling again yields no actions;
    reconciling an already-converged pair yields none either. `revoked_at`
    (mutated in place when given) tracks when each stale grant was revoked so
    lingering sessions are terminated only after `grace` minutes.
    """
    observed_by_key = {g.key(): g for g in observed}
    desired_by_key = {g.key(): g for g in desired}
    if revoked_at is None:
        revoked_at = {}
    session_keys = set(sessions)

    actions: list[DriverAction] = []
    for key in sorted(set(desired_by_key) - set(observed_by_key)):
        g = desired_by_key[key]
        actions.append(
            DriverAction("grant", g.user, g.resource, g.unit, g.start, g.end, "reservation")
        )
    for key in sorted(set(observed_by_key) - set(desired_by_key)):
        g = observed_by_key[key]
        actions.append(
            DriverAction("revoke", g.user, g.resource, g.unit, reason="no covering reservation")
        )
        revoked_at.setdefault(key, now)

    # grace bookkeeping: re-granted holders are no longer pending termination
    for key in list(revoked_at):
        if key in desired_by_key:
            del revoked_at[key]
        elif key not in session_keys and key not in observed_by_key:
            del revoked_at[key]

    for key in sorted(revoked_at):
        if key in session_keys and now - revoked_at[key] >= grace:
            actions.append(
                DriverAction(
                    "terminate_best_effort",
                    key[0],
                    key[1],
                    key[2],
                    reason="session outlived reservation grace",
                )
            )
    return actions


class BrokerWorker:
    """Per-driver convergence loop.

    `run_once` does one pass: snapshot the driver, recompute the desired set
    from the store, diff, and submit a broker.apply command when there is
    anything to do. An unreachable driver is simply retried on the next pass;
    because the diff is recomputed from scratch every time, nothing is ever
    partially forgotten.
    """

    def __init__(self, core: "Core", driver_id: str, tick_interval: int = 60):
        self.core = core
        self.driver_id = driver_id
        self.tick_interval = tick_interval
        self.grace = core.config.revoke_grace
        self.last_seen_seq: int | None = None
        self.revoked_at: dict[GrantKey, int] = {}

    def _bound_resources(self) -> set[str]:
        return {
            r.id for r in self.core.store.resources.values() if r.driver == self.driver_id
        }

    def run_once(self) -> list[DriverAction]:
        now = self.core.clock.now()
        driver = self.core.store.drivers[self.driver_id]
        try:
            snap = driver.snapshot()
        except DriverUnreachable:
            log.warning("driver %s unreachable; will retry", self.driver_id)
            return []
        bound = self._bound_resources()
        observed = {
            AccessGrant(g["user"], g["resource"], g["unit"], g["start"], g["end"])
            for g in snap["grants"]
        }
        desired = {
            g
            for g in desired_state(now, self.core.store.reservations.values())
            if g.resource in bound
        }
        sessions = {(s["user"], s["resource"], s["unit"]) for s in snap["sessions"]}
        actions = reconcile(observed, desired, now, self.revoked_at, sessions, self.grace)
        if actions:
            self.core.execute(
                "broker.apply",
                {"driver": self.driver_id, "actions": [a.to_doc() for a in actions]},
                actor="broker",
            )
        self.last_seen_seq = self.core.head_seq()
        return actions

    def pending_work(self) -> bool:
        return self.last_seen_seq is None or self.core.head_seq() != self.last_seen_seq

    def run_forever(self, stop: threading.Event, poll_seconds: float = 1.0) -> None:
        """Watch loop: react to new events promptly, and do a full pass every
        tick_interval seconds regardless (picks up time-based revocations and
        manual store edits)."""
        last_full = 0.0
        while not stop.is_set():
            due = (time.monotonic() - last_full) >= self.tick_interval
            if due or self.pending_work():
                try:
                    self.run_once()
                except Exception:  # isolate driver failures per worker
                    log.exception("broker worker for %s failed; continuing", self.driver_id)
                last_full = time.monotonic()
            stop.wait(poll_seconds)


def start_workers(core: "Core", tick_interval: int = 60) -> tuple[threading.Event, list[threading.Thread]]:
    stop = threading.Event()
    threads = []
    for driver_id in sorted(core.store.drivers):
        worker = BrokerWorker(core, driver_id, tick_interval)
        thread = threading.Thread(
            target=worker.run_forever, args=(stop,), name=f"broker-{driver_id}", daemon=True
        )
        thread.start()
        threads.append(thread)
    return stop, threads
