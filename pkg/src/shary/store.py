"""The single mutable state container behind the serialized command stream.

Everything a command may touch lives here: catalog, policies, reservations,
offers, auctions, ledger, telemetry streams, notifications, driver states,
counters, and the idempotency cache. `to_doc()` renders the whole thing as a
plain JSON document with deterministic ordering — that canonical form is the
snapshot format, and byte-equality of snapshots is how replay correctness is
checked.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from .catalog import Resource
from .drivers import BaseDriver, build_registry
from .economy import Auction, Bid, Ledger, LedgerEntry
from .policy import Policy, Tier
from .scheduler import Offer, Reservation

log = logging.getLogger(__name__)


@dataclass
class Notification:
    id: str
    user: str
    channel: str  # log | webhook | email-stub
    subject: str
    body: str
    created_at: int
    delivered: bool = False
    attempts: int = 0

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "user": self.user,
            "channel": self.channel,
            "subject": self.subject,
            "body": self.body,
            "created_at": self.created_at,
            "delivered": self.delivered,
            "attempts": self.attempts,
        }


@dataclass
class Store:
    drivers: dict[str, BaseDriver]
    resources: dict[str, Resource] = field(default_factory=dict)
    policies: dict[str, Policy] = field(default_factory=dict)
    reservations: dict[str, Reservation] = field(default_factory=dict)
    offers: dict[str, Offer] = field(default_factory=dict)
    auctions: dict[str, Auction] = field(default_factory=dict)
    ledger: Ledger = field(default_factory=Ledger)
    # telemetry: resource -> unit -> [(ts, util, watts), ...]
    samples: dict[str, dict[int, list[tuple[int, float, float]]]] = field(default_factory=dict)
    notifications: list[Notification] = field(default_factory=list)
    users: dict[str, dict] = field(default_factory=dict)
    pending_reclaims: dict[str, dict] = field(default_factory=dict)
    rejections: list[dict] = field(default_factory=list)
    counters: dict[str, int] = field(default_factory=dict)
    idempotency: dict[str, dict] = field(default_factory=dict)

    @classmethod
    def fresh(cls, driver_config: list[dict]) -> "Store":
        return cls(drivers=build_registry(driver_config))

    def next_id(self, prefix: str) -> str:
        n = self.counters.get(prefix, 0) + 1
        self.counters[prefix] = n
        return f"{prefix}-{n}"

    def notify(self, user: str, subject: str, body: str, now: int) -> Notification:
        """Record (and for local channels, deliver) one notification."""
        account = self.users.get(user, {})
        channel = account.get("channel", "log")
        note = Notification(
            id=self.next_id("ntf"),
            user=user,
            channel=channel,
            subject=subject,
            body=body,
            created_at=now,
            delivered=channel in ("log", "email-stub"),
        )
        self.notifications.append(note)
        if channel == "log":
            log.info("notify %s: %s — %s", user, subject, body)
        return note

    # -- snapshots ---------------------------------------------------------
    def to_doc(self) -> dict:
        return {
            "resources": {rid: r.to_doc() for rid, r in self.resources.items()},
            "policies": {name: p.to_doc() for name, p in self.policies.items()},
            "reservations": {rid: r.to_doc() for rid, r in self.reservations.items()},
            "offers": {oid: o.to_doc() for oid, o in self.offers.items()},
            "auctions": {aid: a.to_doc() for aid, a in self.auctions.items()},
            "ledger": self.ledger.to_doc(),
            "samples": {
                rid: {str(unit): [list(s) for s in samples] for unit, samples in units.items()}
                for rid, units in self.samples.items()
            },
            "notifications": [n.to_doc() for n in self.notifications],
            "users": {u: dict(a) for u, a in self.users.items()},
            "pending_reclaims": {rid: dict(p) for rid, p in self.pending_reclaims.items()},
            "rejections": [dict(r) for r in self.rejections],
            "counters": dict(self.counters),
            "idempotency": {k: dict(v) for k, v in self.idempotency.items()},
            "drivers": {did: d.to_doc() for did, d in self.drivers.items()},
        }

    def snapshot_bytes(self) -> bytes:
        return json.dumps(
            self.to_doc(), sort_keys=True, separators=(",", ":"), ensure_ascii=False
        ).encode("utf-8")

    @classmethod
    def from_doc(cls, doc: dict, driver_config: list[dict]) -> "Store":
        store = cls.fresh(driver_config)
        for did, ddoc in doc.get("drivers", {}).items():
            if did in store.drivers:
                store.drivers[did].load_doc(ddoc)
        store.resources = {
            rid: Resource(
                id=d["id"],
                kind=d["kind"],
                site=d["site"],
                units=d["units"],
                driver=d["driver"],
                attributes=dict(d.get("attributes", {})),
                owner=d.get("owner", "shared"),
                retired=d.get("retired", False),
                enrolled_at=d.get("enrolled_at", 0),
            )
            for rid, d in doc.get("resources", {}).items()
        }
        store.policies = {
            name: Policy(
                name=d["name"],
                applies_kind=d.get("applies_kind"),
                applies_resource=d.get("applies_resource"),
                tiers=[
                    Tier(t["name"], t["advance_minutes"], t["rank"]) for t in d.get("tiers", [])
                ],
                max_duration=d["max_duration"],
                max_active=d.get("max_active"),
                reclaim_idle_after=d.get("reclaim_idle_after"),
                reclaim_grace=d.get("reclaim_grace"),
                contention_mode=d.get("contention_mode", "queue"),
                auction_deadline=d.get("auction_deadline"),
                owner_reclaim=d.get("owner_reclaim", True),
            )
            for name, d in doc.get("policies", {}).items()
        }
        store.reservations = {
            rid: Reservation(
                id=d["id"],
                user=d["user"],
                tier=d["tier"],
                tier_rank=d["tier_rank"],
                resource=d["resource"],
                unit_count=d["unit_count"],
                units=list(d.get("units", [])),
                start=d["start"],
                end=d["end"],
                mode=d["mode"],
                state=d["state"],
                created_at=d["created_at"],
                bid=d.get("bid"),
                auction=d.get("auction"),
                truncated_at=d.get("truncated_at"),
                reserved_minutes=d.get("reserved_minutes", d["end"] - d["start"]),
                batch_kind=d.get("batch_kind"),
                batch_deadline=d.get("batch_deadline"),
                accrued=d.get("accrued", False),
                compensated=d.get("compensated", False),
            )
            for rid, d in doc.get("reservations", {}).items()
        }
        store.offers = {
            oid: Offer(
                id=d["id"],
                resource=d["resource"],
                start=d["start"],
                end=d["end"],
                units=list(d["units"]),
                user=d["user"],
                tier=d["tier"],
                need_units=d.get("need_units", 1),
                issued_at=d["issued_at"],
                ttl=d["ttl"],
                state=d.get("state", "open"),
                succession=[dict(c) for c in d.get("succession", [])],
            )
            for oid, d in doc.get("offers", {}).items()
        }
        store.auctions = {
            aid: Auction(
                id=d["id"],
                resource=d["resource"],
                start=d["start"],
                end=d["end"],
                unit_count=d["unit_count"],
                deadline=d["deadline"],
                opened_at=d["opened_at"],
                bids={b["user"]: Bid(b["user"], b["amount"], b["placed_at"]) for b in d.get("bids", [])},
                state=d.get("state", "open"),
                winner=d.get("winner"),
                winning_amount=d.get("winning_amount"),
            )
            for aid, d in doc.get("auctions", {}).items()
        }
        ledger_doc = doc.get("ledger", {})
        store.ledger = Ledger(
            balances=dict(ledger_doc.get("balances", {})),
            entries=[
                LedgerEntry(e["ts"], e["user"], e["delta"], e["reason"], e.get("ref", ""))
                for e in ledger_doc.get("entries", [])
            ],
            sink_total=ledger_doc.get("sink_total", 0),
        )
        store.samples = {
            rid: {
                int(unit): [(s[0], s[1], s[2]) for s in samples]
                for unit, samples in units.items()
            }
            for rid, units in doc.get("samples", {}).items()
        }
        store.notifications = [
            Notification(
                id=d["id"],
                user=d["user"],
                channel=d["channel"],
                subject=d["subject"],
                body=d["body"],
                created_at=d["created_at"],
                delivered=d.get("delivered", False),
                attempts=d.get("attempts", 0),
            )
            for d in doc.get("notifications", [])
        ]
        store.users = {u: dict(a) for u, a in doc.get("users", {}).items()}
        store.pending_reclaims = {rid: dict(p) for rid, p in doc.get("pending_reclaims", {}).items()}
        store.rejections = [dict(r) for r in doc.get("rejections", [])]
        store.counters = dict(doc.get("counters", {}))
        store.idempotency = {k: dict(v) for k, v in doc.get("idempotency", {}).items()}
        return store
