"""The single logical writer: command dispatch, event append, replay.

Every mutation enters through `execute(kind, payload, actor)`, runs under one
lock, and appends exactly one event on success. Handlers are deterministic
functions of (store, payload, timestamp, actor) — anything nondeterministic
(wall time, generated ids) is either stamped into the event or derived from
store counters — so replaying the log through the same handlers reproduces
the state byte for byte. A handler that raises must leave the store
untouched: failed commands append nothing and therefore must change nothing.

A rejected reservation request is the one "failure" that *is* a state
change (the rejection journal feeds last-minute offers), so it commits as a
regular event with a rejection result instead of raising.
"""

from __future__ import annotations

import logging
import threading
from pathlib import Path
from typing import Callable

from . import catalog, economy, scheduler, telemetry
from .clock import Clock
from .config import CoreConfig
from .errors import CommandError, DriverUnreachable
from .events import EventLog, canonical_json, load_events
from .drivers import DriverAction
from .policy import parse_policy, pretty_print, validate_policy_set
from .store import Store

log = logging.getLogger(__name__)

Handler = Callable[["Core", dict, int, str], dict]
_HANDLERS: dict[str, Handler] = {}


def command(kind: str) -> Callable[[Handler], Handler]:
    def register(fn: Handler) -> Handler:
        _HANDLERS[kind] = fn
        return fn

    return register


class Core:
    def __init__(
        self,
        clock: Clock | None = None,
        config: CoreConfig | None = None,
        log_path: str | Path | None = None,
    ):
        self.clock = clock or Clock()
        self.config = config or CoreConfig()
        self.store = Store.fresh(self.config.drivers)
        self.log = EventLog(log_path)
        self.lock = threading.RLock()
        if self.log.events:
            self._replay_existing()

    # -- command stream ------------------------------------------------------
    def execute(self, kind: str, payload: dict, actor: str = "system") -> tuple[dict, int]:
        """Run one mutating command; returns (result document, event seq)."""
        handler = _HANDLERS.get(kind)
        if handler is None:
            raise CommandError("unknown-command", f"no command {kind!r}")
        with self.lock:
            key = payload.get("idempotency_key")
            if key is not None and key in self.store.idempotency:
                cached = self.store.idempotency[key]
                return cached["result"], cached["seq"]
            now = self.clock.now()
            result = handler(self, payload, now, actor)
            event = self.log.append(now, kind, actor, payload)
            if key is not None:
                self.store.idempotency[key] = {"result": result, "seq": event.seq}
            if (
                self.log.path is not None
                and self.config.snapshot_every
                and event.seq % self.config.snapshot_every == 0
            ):
                self.write_snapshot()
            return result, event.seq

    def head_seq(self) -> int:
        return self.log.head_seq()

    def events_since(self, seq: int) -> list[dict]:
        return [e.to_doc() for e in self.log.since(seq)]

    # -- replay ----------------------------------------------------------------
    def _apply_event(self, event) -> None:
        handler = _HANDLERS.get(event.kind)
        if handler is None:
            raise CommandError("unknown-command", f"log contains unknown command {event.kind!r}")
        result = handler(self, event.payload, event.ts, event.actor)
        key = event.payload.get("idempotency_key")
        if key is not None:
            self.store.idempotency[key] = {"result": result, "seq": event.seq}

    def _replay_existing(self) -> None:
        for event in self.log.events:
            self._apply_event(event)

    @classmethod
    def replay(
        cls,
        events,
        config: CoreConfig | None = None,
        from_snapshot: dict | None = None,
    ) -> "Core":
        """Rebuild state by re-running a verified event list. With
        `from_snapshot` (a state doc plus its head seq), only later events
        run; the result is identical either way."""
        core = cls(config=config)
        start_seq = 0
        if from_snapshot is not None:
            core.store = Store.from_doc(from_snapshot["state"], core.config.drivers)
            start_seq = from_snapshot["seq"]
        for event in events:
            if event.seq <= start_seq:
                core.log.events.append(event)
                continue
            core._apply_event(event)
            core.log.events.append(event)
        return core

    @classmethod
    def replay_file(cls, path: str | Path, config: CoreConfig | None = None) -> "Core":
        return cls.replay(load_events(path), config=config)

    def ensure_user(self, user: str) -> None:
        """Auto-register a first-seen user as its own command event.

        Handlers must not mutate and then raise; folding registration into a
        risky command would do exactly that. As a nested command it lands in
        the log before the outer event, so replay reproduces it even when
        the outer command is later rejected."""
        if user and (user not in self.store.users or user not in self.store.ledger.balances):
            self.execute("user.register", {"user": user}, actor=user)

    def snapshot_doc(self) -> dict:
        return {"seq": self.head_seq(), "state": self.store.to_doc()}

    def write_snapshot(self) -> Path:
        assert self.log.path is not None, "snapshots need a file-backed log"
        path = self.log.path.with_suffix(f".snapshot-{self.head_seq():08d}.json")
        path.write_text(canonical_json(self.snapshot_doc()), encoding="utf-8")
        return path


# ---------------------------------------------------------------------------
# Accounts and notifications
# ---------------------------------------------------------------------------


def _ensure_user(core: Core, user: str, now: int) -> None:
    if user not in core.store.users:
        core.store.users[user] = {"channel": "log", "registered_at": now}
    core.store.ledger.ensure_account(user, now)


@command("user.register")
def _cmd_user_register(core: Core, payload: dict, now: int, actor: str) -> dict:
    user = payload.get("user") or actor
    channel = payload.get("channel", "log")
    if channel not in ("log", "webhook", "email-stub"):
        raise CommandError("invalid-channel", f"unknown channel {channel!r}")
    if channel == "webhook" and not payload.get("webhook_url"):
        raise CommandError("invalid-channel", "webhook channel needs webhook_url")
    _ensure_user(core, user, now)
    account = core.store.users[user]
    account["channel"] = channel
    if payload.get("webhook_url"):
        account["webhook_url"] = payload["webhook_url"]
    return {"user": user, "channel": channel, "balance": core.store.ledger.balance(user)}


@command("notification.delivered")
def _cmd_notification_delivered(core: Core, payload: dict, now: int, actor: str) -> dict:
    note_id = payload.get("id")
    note = next((n for n in core.store.notifications if n.id == note_id), None)
    if note is None:
        raise CommandError("unknown-notification", f"no notification {note_id!r}")
    note.attempts = int(payload.get("attempts", note.attempts))
    note.delivered = bool(payload.get("ok", False))
    return note.to_doc()


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------


@command("resource.register")
def _cmd_resource_register(core: Core, payload: dict, now: int, actor: str) -> dict:
    resource = catalog.register_resource(core.store, payload.get("descriptor"), now)
    return resource.to_doc()


@command("resource.decommission")
def _cmd_resource_decommission(core: Core, payload: dict, now: int, actor: str) -> dict:
    rid = payload.get("id", "")
    catalog.get_resource(core.store, rid)  # raises unknown-resource first
    cancelled = scheduler.cancel_for_decommission(core.store, core.config, rid, now)
    resource = catalog.mark_retired(core.store, rid)
    return {"resource": resource.to_doc(), "cancelled": cancelled}


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------


@command("policy.install")
def _cmd_policy_install(core: Core, payload: dict, now: int, actor: str) -> dict:
    source = payload.get("source", "")
    policy, diagnostics = parse_policy(source)
    if policy is None:
        raise CommandError(
            "policy-parse-error",
            "policy source has errors",
            details=[d.to_doc() for d in diagnostics],
        )
    others = [p for name, p in core.store.policies.items() if name != policy.name]
    validate_policy_set(others + [policy])
    core.store.policies[policy.name] = policy
    return {"policy": policy.to_doc(), "source": pretty_print(policy)}


# ---------------------------------------------------------------------------
# Reservations
# ---------------------------------------------------------------------------


@command("reservation.request")
def _cmd_reservation_request(core: Core, payload: dict, now: int, actor: str) -> dict:
    user = payload.get("user") or actor
    tier = payload.get("tier", "default")
    core.ensure_user(user)
    try:
        rsv = scheduler.request_reservation(
            core.store,
            core.config,
            user=user,
            tier=tier,
            resource_id=payload.get("resource", ""),
            unit_count=payload.get("unit_count", 1),
            start=payload.get("start"),
            end=payload.get("end"),
            mode=payload.get("mode", "interactive"),
            bid=payload.get("bid"),
            now=now,
        )
    except CommandError as exc:
        if exc.code not in scheduler.JOURNAL_REASONS:
            raise
        # policy/capacity rejections commit: the journal feeds offers
        tier_rank = 99
        resource = core.store.resources.get(payload.get("resource", ""))
        if resource is not None:
            try:
                tier_rank = scheduler.policy_for(core.store, resource.id).tier(tier).rank
            except CommandError:
                pass
        scheduler.record_rejection(
            core.store,
            user=user,
            tier=tier,
            tier_rank=tier_rank,
            resource_id=payload.get("resource", ""),
            unit_count=payload.get("unit_count", 1),
            start=payload.get("start", 0),
            end=payload.get("end", 0),
            reason=exc.code,
            now=now,
        )
        return {"rejected": True, "error": exc.to_doc()}
    return rsv.to_doc()


@command("reservation.cancel")
def _cmd_reservation_cancel(core: Core, payload: dict, now: int, actor: str) -> dict:
    rsv = scheduler.cancel_reservation(
        core.store, core.config, payload.get("id", ""), actor, bool(payload.get("admin")), now
    )
    return rsv.to_doc()


@command("reservation.release")
def _cmd_reservation_release(core: Core, payload: dict, now: int, actor: str) -> dict:
    rsv, freed = scheduler.release_early(
        core.store,
        core.config,
        payload.get("id", ""),
        payload.get("at", now),
        actor,
        bool(payload.get("admin")),
        now,
    )
    return {"reservation": rsv.to_doc(), "freed": list(freed) if freed else None}


@command("reservation.manual_edit")
def _cmd_reservation_manual_edit(core: Core, payload: dict, now: int, actor: str) -> dict:
    """Admin escape hatch mirroring a direct store edit: applied verbatim,
    bypassing policy admission, with a policy-bypass warning logged. The
    broker picks the result up on its next pass like any other change."""
    if not payload.get("admin"):
        raise CommandError("forbidden-actor", "manual edits require an administrator")
    doc = payload.get("reservation")
    if not isinstance(doc, dict):
        raise CommandError("invalid-edit", "reservation document required")
    required = ("id", "user", "resource", "units", "start", "end", "state")
    missing = [k for k in required if k not in doc]
    if missing:
        raise CommandError("invalid-edit", f"missing keys: {', '.join(missing)}")
    resource = core.store.resources.get(doc["resource"])
    if resource is None:
        raise CommandError("unknown-resource", f"no resource {doc['resource']!r}")
    units = doc["units"]
    if (
        not isinstance(units, list)
        or not units
        or any(not isinstance(u, int) or isinstance(u, bool) or not 0 <= u < resource.units
               for u in units)
    ):
        raise CommandError("invalid-edit", "units must be a non-empty list of valid unit indices")
    if (
        not isinstance(doc["start"], int)
        or not isinstance(doc["end"], int)
        or doc["end"] <= doc["start"]
    ):
        raise CommandError("invalid-edit", "end must be after start")
    if doc["state"] not in scheduler.STATES:
        raise CommandError("invalid-edit", f"unknown state {doc['state']!r}")
    core.ensure_user(doc["user"])
    rsv = scheduler.Reservation(
        id=doc["id"],
        user=doc["user"],
        tier=doc.get("tier", "default"),
        tier_rank=doc.get("tier_rank", 1),
        resource=doc["resource"],
        unit_count=len(doc["units"]),
        units=sorted(doc["units"]),
        start=doc["start"],
        end=doc["end"],
        mode=doc.get("mode", "interactive"),
        state=doc["state"],
        created_at=now,
        reserved_minutes=doc["end"] - doc["start"],
    )
    core.store.reservations[rsv.id] = rsv
    log.warning("policy bypass: manual edit of reservation %s by %s", rsv.id, actor)
    core.store.notify(
        doc["user"], "manual reservation edit", f"{rsv.id} applied verbatim (policy bypassed)", now
    )
    return rsv.to_doc()


@command("batch.submit")
def _cmd_batch_submit(core: Core, payload: dict, now: int, actor: str) -> dict:
    user = payload.get("user") or actor
    core.ensure_user(user)
    rsv = scheduler.submit_batch(
        core.store,
        core.config,
        user=user,
        tier=payload.get("tier", "default"),
        kind=payload.get("kind", ""),
        unit_count=payload.get("unit_count", 1),
        duration=payload.get("duration", 0),
        deadline=payload.get("deadline"),
        now=now,
    )
    return rsv.to_doc()


@command("offer.accept")
def _cmd_offer_accept(core: Core, payload: dict, now: int, actor: str) -> dict:
    rsv = scheduler.accept_offer(core.store, core.config, payload.get("id", ""), actor, now)
    return rsv.to_doc()


@command("offer.decline")
def _cmd_offer_decline(core: Core, payload: dict, now: int, actor: str) -> dict:
    offers = scheduler.decline_offer(core.store, core.config, payload.get("id", ""), actor, now)
    return {"declined": payload.get("id"), "next_offers": [o.to_doc() for o in offers]}


@command("owner.reclaim")
def _cmd_owner_reclaim(core: Core, payload: dict, now: int, actor: str) -> dict:
    scheduled = scheduler.owner_reclaim(
        core.store, core.config, payload.get("resource", ""), actor, bool(payload.get("admin")), now
    )
    return {"scheduled": scheduled}


# ---------------------------------------------------------------------------
# Economy
# ---------------------------------------------------------------------------


@command("auction.bid")
def _cmd_auction_bid(core: Core, payload: dict, now: int, actor: str) -> dict:
    user = payload.get("user") or actor
    core.ensure_user(user)
    bid = economy.place_bid(
        core.store, payload.get("auction", ""), user, payload.get("amount", 0), now
    )
    return bid.to_doc()


@command("tokens.grant")
def _cmd_tokens_grant(core: Core, payload: dict, now: int, actor: str) -> dict:
    if not payload.get("admin"):
        raise CommandError("forbidden-actor", "token grants require an administrator")
    user = payload.get("user", "")
    amount = payload.get("amount", 0)
    if not user:
        raise CommandError("unknown-user", "user required")
    if not isinstance(amount, int) or isinstance(amount, bool) or amount == 0:
        raise CommandError("invalid-amount", "amount must be a non-zero integer")
    core.ensure_user(user)
    core.store.ledger.append(now, user, amount, "grant", "admin")
    return {"user": user, "balance": core.store.ledger.balance(user)}


# ---------------------------------------------------------------------------
# Telemetry
# ---------------------------------------------------------------------------


@command("telemetry.ingest")
def _cmd_telemetry_ingest(core: Core, payload: dict, now: int, actor: str) -> dict:
    docs = payload.get("samples")
    if docs is None:
        docs = [payload.get("sample")]
    count = telemetry.ingest_batch(core.store, docs)
    return {"ingested": count}


# ---------------------------------------------------------------------------
# Drivers and broker
# ---------------------------------------------------------------------------


@command("driver.exec")
def _cmd_driver_exec(core: Core, payload: dict, now: int, actor: str) -> dict:
    driver_id = payload.get("driver", "")
    driver = core.store.drivers.get(driver_id)
    if driver is None:
        raise CommandError("unknown-driver", f"no driver {driver_id!r}")
    user = payload.get("user") or actor
    try:
        return driver.execute(user, payload.get("verb", ""), payload.get("args", []))
    except DriverUnreachable as exc:
        raise CommandError("driver-unreachable", str(exc)) from None


@command("broker.apply")
def _cmd_broker_apply(core: Core, payload: dict, now: int, actor: str) -> dict:
    driver_id = payload.get("driver", "")
    driver = core.store.drivers.get(driver_id)
    if driver is None:
        raise CommandError("unknown-driver", f"no driver {driver_id!r}")
    if not driver.reachable:
        raise CommandError("driver-unreachable", f"driver {driver_id} is unreachable")
    actions = [DriverAction.from_doc(d) for d in payload.get("actions", [])]
    valid_kinds = {"grant", "revoke", "terminate_best_effort"}
    bad = [a.kind for a in actions if a.kind not in valid_kinds]
    if bad:
        raise CommandError("invalid-action", f"unknown action kinds: {sorted(set(bad))}")
    for action in actions:
        driver.apply(action)
    return {"driver": driver_id, "applied": len(actions)}


# ---------------------------------------------------------------------------
# Tick
# ---------------------------------------------------------------------------


@command("tick")
def _cmd_tick(core: Core, payload: dict, now: int, actor: str) -> dict:
    return scheduler.tick(core.store, core.config, now)
