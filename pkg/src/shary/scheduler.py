"""Calendar core: admission, queueing, release, preemption, offers, batch fit.

Time is whole minutes; reservations snap to the 15-minute grid and intervals are
half-open, so [a,b) and [b,c) coexist on one unit. The original booked
interval is immutable once confirmed; early release and preemption record a
truncation point instead of rewriting it, which keeps accounting honest and
makes the freed remainder available to the conflict checks immediately.

Capacity changes cascade: whenever a window frees up, the queue is drained
in (tier rank, created_at) order, then a last-minute offer is issued to the
best remaining candidate if the window starts within the next 24 hours.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from . import catalog, economy, telemetry
from .clock import GRAIN, align_up, is_aligned
from .errors import CommandError
from .intervals import complement, overlaps
from .policy import Policy, check_advance, effective_policy

if TYPE_CHECKING:
    from .config import CoreConfig
    from .store import Store

log = logging.getLogger(__name__)

STATES = (
    "queued",
    "confirmed",
    "active",
    "completed",
    "released",
    "preempted",
    "cancelled",
    "expired",
)

_EDGES = {
    "queued": {"confirmed", "cancelled", "expired"},
    "confirmed": {"active", "cancelled", "preempted"},
    "active": {"completed", "released", "preempted"},
}

# rejection reasons that feed the last-minute-offer candidate journal
JOURNAL_REASONS = (
    "advance-denied",
    "duration-exceeded",
    "max-active-exceeded",
    "units-exceed-capacity",
)
_REJECTION_JOURNAL_CAP = 500


@dataclass
class Reservation:
    id: str
    user: str
    tier: str
    tier_rank: int
    resource: str  # "" while a batch request is still unplaced
    unit_count: int
    units: list[int]  # assigned at confirmation
    start: int
    end: int  # original booked end; see truncated_at
    mode: str  # interactive | batch
    state: str
    created_at: int
    bid: int | None = None
    auction: str | None = None
    truncated_at: int | None = None  # early release / preemption cut point
    reserved_minutes: int = 0  # original duration, per unit
    batch_kind: str | None = None
    batch_deadline: int | None = None
    accrued: bool = False
    compensated: bool = False

    def effective_end(self) -> int:
        return self.truncated_at if self.truncated_at is not None else self.end

    def holds_capacity(self) -> bool:
        return self.state in ("confirmed", "active")

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "user": self.user,
            "tier": self.tier,
            "tier_rank": self.tier_rank,
            "resource": self.resource,
            "unit_count": self.unit_count,
            "units": list(self.units),
            "start": self.start,
            "end": self.end,
            "mode": self.mode,
            "state": self.state,
            "created_at": self.created_at,
            "bid": self.bid,
            "auction": self.auction,
            "truncated_at": self.truncated_at,
            "reserved_minutes": self.reserved_minutes,
            "batch_kind": self.batch_kind,
            "batch_deadline": self.batch_deadline,
            "accrued": self.accrued,
            "compensated": self.compensated,
        }


@dataclass
class Offer:
    id: str
    resource: str
    start: int
    end: int
    units: list[int]
    user: str
    tier: str
    need_units: int
    issued_at: int
    ttl: int
    state: str = "open"  # open | accepted | expired | superseded
    # candidates still in line behind this one, fixed when the window freed
    succession: list[dict] = field(default_factory=list)

    def window_key(self) -> tuple[str, int, int]:
        return (self.resource, self.start, self.end)

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "resource": self.resource,
            "start": self.start,
            "end": self.end,
            "units": list(self.units),
            "user": self.user,
            "tier": self.tier,
            "need_units": self.need_units,
            "issued_at": self.issued_at,
            "ttl": self.ttl,
            "state": self.state,
            "succession": [dict(c) for c in self.succession],
        }


def _transition(rsv: Reservation, new_state: str) -> None:
    allowed = _EDGES.get(rsv.state, set())
    if new_state not in allowed:
        raise CommandError(
            "invalid-state",
            f"reservation {rsv.id} is {rsv.state}; cannot become {new_state}",
        )
    rsv.state = new_state


def policy_for(store: "Store", resource_id: str) -> Policy:
    resource = store.resources[resource_id]
    return effective_policy(resource, store.policies.values())


# ---------------------------------------------------------------------------
# Conflict primitives
# ---------------------------------------------------------------------------


def find_conflicts(store: "Store", resource_id: str, start: int, end: int) -> list[Reservation]:
    """Confirmed/active reservations intersecting [start, end), half-open."""
    catalog.get_resource(store, resource_id)
    hits = [
        rsv
        for rsv in store.reservations.values()
        if rsv.resource == resource_id
        and rsv.holds_capacity()
        and overlaps(rsv.start, rsv.effective_end(), start, end)
    ]
    hits.sort(key=lambda r: (r.start, r.id))
    return hits


def free_units(store: "Store", resource_id: str, start: int, end: int) -> list[int]:
    """Unit indices with no confirmed/active reservation over [start, end)."""
    resource = store.resources[resource_id]
    busy: set[int] = set()
    for rsv in store.reservations.values():
        if (
            rsv.resource == resource_id
            and rsv.holds_capacity()
            and overlaps(rsv.start, rsv.effective_end(), start, end)
        ):
            busy.update(rsv.units)
    return [u for u in resource.unit_indices() if u not in busy]


def availability(store: "Store", resource_id: str, start: int, end: int) -> dict[int, list[tuple[int, int]]]:
    """Per-unit maximal free intervals within [start, end), sorted by start."""
    resource = catalog.get_resource(store, resource_id)
    per_unit: dict[int, list[tuple[int, int]]] = {}
    for unit in resource.unit_indices():
        busy = [
            (rsv.start, rsv.effective_end())
            for rsv in store.reservations.values()
            if rsv.resource == resource_id and rsv.holds_capacity() and unit in rsv.units
        ]
        per_unit[unit] = complement((start, end), busy)
    return per_unit


# ---------------------------------------------------------------------------
# Admission
# ---------------------------------------------------------------------------


def _check_interval(start: int, end: int) -> None:
    for value in (start, end):
        if not isinstance(value, int) or isinstance(value, bool):
            raise CommandError("misaligned-interval", "interval bounds must be integer minutes")
    if end <= start:
        raise CommandError("misaligned-interval", "interval end must be after start")
    if not is_aligned(start) or not is_aligned(end):
        raise CommandError(
            "misaligned-interval", f"interval must align to {GRAIN}-minute boundaries"
        )


def _count_active_under_policy(store: "Store", user: str, pol: Policy) -> int:
    count = 0
    policy_cache: dict[str, str] = {}
    for rsv in store.reservations.values():
        if rsv.user != user or not rsv.holds_capacity():
            continue
        name = policy_cache.get(rsv.resource)
        if name is None:
            name = policy_for(store, rsv.resource).name
            policy_cache[rsv.resource] = name
        if name == pol.name:
            count += 1
    return count


def request_reservation(
    store: "Store",
    cfg: "CoreConfig",
    user: str,
    tier: str,
    resource_id: str,
    unit_count: int,
    start: int,
    end: int,
    mode: str,
    bid: int | None,
    now: int,
) -> Reservation:
    """Admit a reservation request: confirm on free capacity, otherwise queue
    (opening an auction when the policy says so). Raises CommandError on
    rejection without touching the store."""
    resource = catalog.get_active_resource(store, resource_id)
    _check_interval(start, end)
    if mode not in ("interactive", "batch"):
        raise CommandError("invalid-mode", "mode must be interactive or batch")
    if start < now:
        raise CommandError("start-in-past", "reservation start is in the past")
    if not isinstance(unit_count, int) or isinstance(unit_count, bool) or unit_count < 1:
        raise CommandError("invalid-units", "unit count must be >= 1")
    if unit_count > resource.units:
        raise CommandError("units-exceed-capacity", "units exceed capacity")
    pol = policy_for(store, resource_id)
    tier_obj = pol.tier(tier)  # raises unknown-tier
    allowed, reason = check_advance(pol, tier, now, start)
    if not allowed:
        raise CommandError("advance-denied", reason or "advance window exceeded")
    if end - start > pol.max_duration:
        raise CommandError(
            "duration-exceeded",
            f"duration {end - start}m exceeds policy max {pol.max_duration}m",
        )
    if pol.max_active is not None and _count_active_under_policy(store, user, pol) >= pol.max_active:
        raise CommandError("max-active-exceeded", f"user {user} is at max_active {pol.max_active}")
    if bid is not None:
        if not isinstance(bid, int) or isinstance(bid, bool) or bid < 1:
            raise CommandError("non-positive-bid", "bid must be a positive integer")
        if bid > store.ledger.balance(user):
            raise CommandError(
                "insufficient-tokens",
                f"bid {bid} exceeds balance {store.ledger.balance(user)}",
            )

    free = free_units(store, resource_id, start, end)
    rsv = Reservation(
        id="",  # allocated below, after all validation
        user=user,
        tier=tier,
        tier_rank=tier_obj.rank,
        resource=resource_id,
        unit_count=unit_count,
        units=[],
        start=start,
        end=end,
        mode=mode,
        state="queued",
        created_at=now,
        bid=bid,
        reserved_minutes=end - start,
    )

    if len(free) >= unit_count:
        rsv.id = store.next_id("rsv")
        store.reservations[rsv.id] = rsv
        _confirm(store, rsv, free[:unit_count])
        return rsv

    if pol.contention_mode == "auction":
        auction = economy.find_open_auction(store, resource_id, start, end)
        if auction is None:
            deadline = min(now + (pol.auction_deadline or 0), start)
            auction = economy.open_auction(
                store, resource_id, start, end, unit_count, deadline, now
            )
        if bid is not None:
            economy.place_bid(store, auction.id, user, bid, now)
        rsv.id = store.next_id("rsv")
        rsv.auction = auction.id
        store.reservations[rsv.id] = rsv
        return rsv

    rsv.id = store.next_id("rsv")
    store.reservations[rsv.id] = rsv
    return rsv


def record_rejection(
    store: "Store",
    user: str,
    tier: str,
    tier_rank: int,
    resource_id: str,
    unit_count: int,
    start: int,
    end: int,
    reason: str,
    now: int,
) -> None:
    """Journal a rejected request so freed windows can be offered to its user."""
    store.rejections.append(
        {
            "user": user,
            "tier": tier,
            "tier_rank": tier_rank,
            "resource": resource_id,
            "unit_count": unit_count,
            "start": start,
            "end": end,
            "reason": reason,
            "created_at": now,
        }
    )
    if len(store.rejections) > _REJECTION_JOURNAL_CAP:
        del store.rejections[: len(store.rejections) - _REJECTION_JOURNAL_CAP]


def _confirm(store: "Store", rsv: Reservation, units: list[int]) -> None:
    rsv.units = sorted(units)
    if rsv.state == "queued":
        _transition(rsv, "confirmed")
    # capacity is now taken: any open offer on an overlapping window is stale
    for offer in store.offers.values():
        if (
            offer.state == "open"
            and offer.resource == rsv.resource
            and overlaps(offer.start, offer.end, rsv.start, rsv.effective_end())
            and set(offer.units) & set(rsv.units)
        ):
            offer.state = "superseded"


# ---------------------------------------------------------------------------
# Cancel / release
# ---------------------------------------------------------------------------


def cancel_reservation(
    store: "Store", cfg: "CoreConfig", rsv_id: str, actor: str, admin: bool, now: int
) -> Reservation:
    rsv = store.reservations.get(rsv_id)
    if rsv is None:
        raise CommandError("unknown-id", f"no reservation {rsv_id!r}")
    if rsv.state == "active":
        raise CommandError("invalid-state", "reservation is active; release it instead")
    if rsv.state not in ("queued", "confirmed"):
        raise CommandError("invalid-state", f"reservation is already {rsv.state}")
    if actor != rsv.user and not admin:
        raise CommandError("forbidden-actor", f"{actor} may not cancel {rsv_id}")
    was_confirmed = rsv.state == "confirmed"
    _transition(rsv, "cancelled")
    store.notify(rsv.user, "reservation cancelled", f"{rsv.id} on {rsv.resource} cancelled", now)
    if was_confirmed:
        _capacity_freed(store, cfg, rsv.resource, rsv.start, rsv.end, rsv.units, now)
    return rsv


def release_early(
    store: "Store", cfg: "CoreConfig", rsv_id: str, at: int, actor: str, admin: bool, now: int
) -> tuple[Reservation, tuple[int, int] | None]:
    """Truncate an active reservation at `at`, freeing the remainder.

    The cut snaps up to the next 15-minute boundary so the freed window stays
    bookable; returns the freed interval (or None when nothing frees)."""
    rsv = store.reservations.get(rsv_id)
    if rsv is None:
        raise CommandError("unknown-id", f"no reservation {rsv_id!r}")
    if rsv.state != "active":
        raise CommandError("invalid-state", f"reservation is {rsv.state}, not active")
    if actor != rsv.user and not admin:
        raise CommandError("forbidden-actor", f"{actor} may not release {rsv_id}")
    if not isinstance(at, int) or isinstance(at, bool) or not (rsv.start <= at < rsv.end):
        raise CommandError("at-outside-interval", f"release point must be within [{rsv.start}, {rsv.end})")

    cut = min(align_up(at), rsv.end)
    busy = telemetry.busy_minutes(store, rsv.resource, rsv.units, rsv.start, cut)
    reserved_total = rsv.reserved_minutes * len(rsv.units)
    _transition(rsv, "released")
    rsv.truncated_at = cut
    rsv.accrued = True
    store.ledger.append(
        now,
        rsv.user,
        economy.accrual_delta(reserved_total, busy),
        "accrual" if busy > 0 else "no_show_penalty",
        rsv.id,
    )
    freed_minutes = rsv.end - cut
    store.ledger.append(
        now,
        rsv.user,
        economy.early_release_bonus_delta(freed_minutes, rsv.reserved_minutes),
        "early_release_bonus",
        rsv.id,
    )
    freed = (cut, rsv.end) if cut < rsv.end else None
    if freed is not None:
        _capacity_freed(store, cfg, rsv.resource, freed[0], freed[1], rsv.units, now)
    return rsv, freed


def cancel_for_decommission(store: "Store", cfg: "CoreConfig", resource_id: str, now: int) -> list[str]:
    """Cancel queued+confirmed reservations on a retiring resource; active
    sessions run to completion."""
    cancelled = []
    for rid in sorted(store.reservations):
        rsv = store.reservations[rid]
        if rsv.resource == resource_id and rsv.state in ("queued", "confirmed"):
            _transition(rsv, "cancelled")
            store.notify(
                rsv.user,
                "reservation cancelled",
                f"{rsv.id} cancelled: resource {resource_id} decommissioned",
                now,
            )
            cancelled.append(rid)
    return cancelled


# ---------------------------------------------------------------------------
# Queue promotion
# ---------------------------------------------------------------------------


def promote_queued(store: "Store", cfg: "CoreConfig", resource_id: str, now: int) -> list[str]:
    """Drain the queue for one resource in (tier rank, created_at) order,
    confirming every entry that now fits. Batch entries matching the
    resource's kind are re-fit via first-fit placement."""
    if not cfg.promotion_enabled:
        return []
    resource = store.resources.get(resource_id)
    if resource is None:
        return []
    candidates = [
        rsv
        for rsv in store.reservations.values()
        if rsv.state == "queued"
        and (
            rsv.resource == resource_id
            or (rsv.mode == "batch" and rsv.resource == "" and rsv.batch_kind == resource.kind)
        )
    ]
    candidates.sort(key=lambda r: (r.tier_rank, r.created_at, r.id))
    promoted: list[str] = []
    for rsv in candidates:
        if rsv.auction is not None:
            auction = store.auctions.get(rsv.auction)
            if auction is not None and auction.state == "open":
                continue  # contested window; settlement decides
        if rsv.mode == "batch" and rsv.resource == "":
            if _try_place_batch(store, cfg, rsv, now):
                promoted.append(rsv.id)
            continue
        if now > rsv.start:
            _transition(rsv, "expired")
            store.notify(rsv.user, "reservation expired", f"{rsv.id} start passed while queued", now)
            continue
        pol = policy_for(store, rsv.resource)
        if pol.max_active is not None and _count_active_under_policy(store, rsv.user, pol) >= pol.max_active:
            continue
        free = free_units(store, rsv.resource, rsv.start, rsv.end)
        if len(free) >= rsv.unit_count:
            _confirm(store, rsv, free[: rsv.unit_count])
            promoted.append(rsv.id)
    return promoted


# ---------------------------------------------------------------------------
# Last-minute offers
# ---------------------------------------------------------------------------


def _offer_candidates(
    store: "Store", resource_id: str, start: int, end: int
) -> list[dict]:
    """Users with queued or previously-rejected requests overlapping the
    window, best (tier rank, created_at) first, one entry per user."""
    raw: list[dict] = []
    for rid in sorted(store.reservations):
        rsv = store.reservations[rid]
        if (
            rsv.state == "queued"
            and rsv.resource == resource_id
            and overlaps(rsv.start, rsv.end, start, end)
        ):
            raw.append(
                {
                    "user": rsv.user,
                    "tier": rsv.tier,
                    "tier_rank": rsv.tier_rank,
                    "unit_count": rsv.unit_count,
                    "created_at": rsv.created_at,
                }
            )
    for rec in store.rejections:
        if rec["resource"] == resource_id and overlaps(rec["start"], rec["end"], start, end):
            raw.append(
                {
                    "user": rec["user"],
                    "tier": rec["tier"],
                    "tier_rank": rec["tier_rank"],
                    "unit_count": rec["unit_count"],
                    "created_at": rec["created_at"],
                }
            )
    raw.sort(key=lambda c: (c["tier_rank"], c["created_at"], c["user"]))
    seen: set[str] = set()
    out = []
    for cand in raw:
        if cand["user"] not in seen:
            seen.add(cand["user"])
            out.append(cand)
    return out


def _issue_offer(
    store: "Store",
    cfg: "CoreConfig",
    resource_id: str,
    start: int,
    end: int,
    units: list[int],
    candidate: dict,
    succession: list[dict],
    now: int,
) -> Offer:
    offer = Offer(
        id=store.next_id("off"),
        resource=resource_id,
        start=start,
        end=end,
        units=units,
        user=candidate["user"],
        tier=candidate["tier"],
        need_units=candidate["unit_count"],
        issued_at=now,
        ttl=cfg.offer_ttl,
        succession=[dict(c) for c in succession],
    )
    store.offers[offer.id] = offer
    store.notify(
        candidate["user"],
        "last-minute availability",
        f"offer {offer.id}: {resource_id} units {units} [{start}, {end})",
        now,
    )
    return offer


def generate_offers(
    store: "Store",
    cfg: "CoreConfig",
    resource_id: str,
    start: int,
    end: int,
    units: list[int],
    now: int,
) -> list[Offer]:
    """Issue one open offer for a freed window to the best candidate; the
    rest of the candidate line rides along for expiry/decline succession.
    Windows starting beyond the 24h horizon go back to general availability."""
    if not cfg.offers_enabled:
        return []
    if start >= end or start - now > cfg.offer_horizon:
        return []
    still_free = [u for u in free_units(store, resource_id, start, end) if u in set(units)]
    if not still_free:
        return []
    for offer in store.offers.values():
        if offer.state == "open" and offer.window_key() == (resource_id, start, end):
            return []  # one open offer per freed window
    offered_users = {
        o.user for o in store.offers.values() if o.window_key() == (resource_id, start, end)
    }
    candidates = [
        c for c in _offer_candidates(store, resource_id, start, end)
        if c["user"] not in offered_users
    ]
    if not candidates:
        return []
    return [
        _issue_offer(
            store, cfg, resource_id, start, end, still_free, candidates[0], candidates[1:], now
        )
    ]


def advance_offer_chain(store: "Store", cfg: "CoreConfig", offer: Offer, now: int) -> list[Offer]:
    """After an offer expires or is declined, move it to the next candidate
    recorded when the window freed (if the capacity is still there)."""
    if not cfg.offers_enabled:
        return []
    offered_users = {
        o.user for o in store.offers.values() if o.window_key() == offer.window_key()
    }
    remaining = [c for c in offer.succession if c["user"] not in offered_users]
    still_free = [
        u for u in free_units(store, offer.resource, offer.start, offer.end)
        if u in set(offer.units)
    ]
    if not remaining or not still_free:
        return []
    return [
        _issue_offer(
            store,
            cfg,
            offer.resource,
            offer.start,
            offer.end,
            still_free,
            remaining[0],
            remaining[1:],
            now,
        )
    ]


def accept_offer(
    store: "Store", cfg: "CoreConfig", offer_id: str, actor: str, now: int
) -> Reservation:
    """Turn an open offer into a confirmed reservation for its candidate.

    The window start is clipped to the next grid point at or after `now`;
    admission runs under the candidate's recorded tier and must pass the
    same no-overlap checks as any booking."""
    offer = store.offers.get(offer_id)
    if offer is None:
        raise CommandError("unknown-offer", f"no offer {offer_id!r}")
    if offer.state != "open":
        raise CommandError("offer-unavailable", f"offer {offer_id} is {offer.state}")
    if actor != offer.user:
        raise CommandError("forbidden-actor", f"offer {offer_id} is not addressed to {actor}")
    if now >= offer.issued_at + offer.ttl:
        raise CommandError("offer-expired", f"offer {offer_id} expired")
    start = max(offer.start, align_up(now))
    if start >= offer.end:
        raise CommandError("offer-expired", f"offer {offer_id} window has passed")
    free = [u for u in free_units(store, offer.resource, start, offer.end) if u in set(offer.units)]
    count = min(offer.need_units, len(offer.units))
    if len(free) < count:
        raise CommandError("offer-unavailable", "offered capacity was taken")
    pol = policy_for(store, offer.resource)
    tier_obj = pol.tier(offer.tier)
    if pol.max_active is not None and _count_active_under_policy(store, actor, pol) >= pol.max_active:
        raise CommandError("max-active-exceeded", f"user {actor} is at max_active {pol.max_active}")

    offer.state = "accepted"
    rsv = Reservation(
        id=store.next_id("rsv"),
        user=actor,
        tier=offer.tier,
        tier_rank=tier_obj.rank,
        resource=offer.resource,
        unit_count=count,
        units=[],
        start=start,
        end=offer.end,
        mode="interactive",
        state="queued",
        created_at=now,
        reserved_minutes=offer.end - start,
    )
    store.reservations[rsv.id] = rsv
    _confirm(store, rsv, free[:count])
    return rsv


def decline_offer(store: "Store", cfg: "CoreConfig", offer_id: str, actor: str, now: int) -> list[Offer]:
    """Pass on an offer; the window immediately moves to the next candidate."""
    offer = store.offers.get(offer_id)
    if offer is None:
        raise CommandError("unknown-offer", f"no offer {offer_id!r}")
    if offer.state != "open":
        raise CommandError("offer-unavailable", f"offer {offer_id} is {offer.state}")
    if actor != offer.user:
        raise CommandError("forbidden-actor", f"offer {offer_id} is not addressed to {actor}")
    offer.state = "expired"
    return advance_offer_chain(store, cfg, offer, now)


# ---------------------------------------------------------------------------
# Batch placement
# ---------------------------------------------------------------------------


def _batch_fit(
    store: "Store",
    tier: str,
    kind: str,
    unit_count: int,
    duration: int,
    deadline: int | None,
    now: int,
) -> tuple[str, int, int] | None:
    """Earliest (resource, start, rank) able to host `unit_count` units for
    `duration` minutes, respecting each resource's advance window. Global
    earliest start wins; ties go to the lower resource id."""
    base = align_up(now)
    best: tuple[int, str, int] | None = None  # (start, resource, rank)
    for resource in catalog.list_resources(store, kind=kind):
        if resource.retired or resource.units < unit_count:
            continue
        pol = policy_for(store, resource.id)
        try:
            tier_obj = pol.tier(tier)
        except CommandError:
            continue
        if duration > pol.max_duration:
            continue
        limit = now + tier_obj.advance_minutes  # latest admissible start
        if deadline is not None:
            limit = min(limit, deadline)
        if base > limit:
            continue
        horizon = limit + duration
        per_unit = availability(store, resource.id, base, horizon)
        starts = {base}
        for spans in per_unit.values():
            for s, _ in spans:
                starts.add(align_up(s))
        for s in sorted(starts):
            if s > limit:
                break
            if best is not None and s >= best[0]:
                break
            count = sum(
                1
                for spans in per_unit.values()
                if any(fs <= s and s + duration <= fe for fs, fe in spans)
            )
            if count >= unit_count:
                if best is None or (s, resource.id) < (best[0], best[1]):
                    best = (s, resource.id, tier_obj.rank)
                break
    if best is None:
        return None
    return best[1], best[0], best[2]


def submit_batch(
    store: "Store",
    cfg: "CoreConfig",
    user: str,
    tier: str,
    kind: str,
    unit_count: int,
    duration: int,
    deadline: int | None,
    now: int,
) -> Reservation:
    """First-fit earliest placement of a batch job; queues when nothing fits
    and no deadline binds."""
    if not isinstance(unit_count, int) or isinstance(unit_count, bool) or unit_count < 1:
        raise CommandError("invalid-units", "unit count must be >= 1")
    if (
        not isinstance(duration, int)
        or isinstance(duration, bool)
        or duration < GRAIN
        or duration % GRAIN
    ):
        raise CommandError("misaligned-interval", f"duration must be a positive multiple of {GRAIN}m")
    matching = [r for r in catalog.list_resources(store, kind=kind) if not r.retired]
    if not matching:
        raise CommandError("no-matching-kind", f"no resources of kind {kind!r}")
    policies = [policy_for(store, r.id) for r in matching]
    if all(duration > p.max_duration for p in policies):
        raise CommandError("duration-exceeded", f"duration {duration}m exceeds every policy cap")
    tier_ranks = []
    for pol in policies:
        try:
            tier_ranks.append(pol.tier(tier).rank)
        except CommandError:
            pass
    if not tier_ranks:
        raise CommandError("unknown-tier", f"no policy for kind {kind!r} defines tier {tier!r}")

    fit = _batch_fit(store, tier, kind, unit_count, duration, deadline, now)
    if fit is None:
        if deadline is not None:
            raise CommandError("deadline-infeasible", "deadline before earliest feasible start")
        base = align_up(now)
        rsv = Reservation(
            id=store.next_id("rsv"),
            user=user,
            tier=tier,
            tier_rank=min(tier_ranks),
            resource="",
            unit_count=unit_count,
            units=[],
            start=base,
            end=base + duration,
            mode="batch",
            state="queued",
            created_at=now,
            reserved_minutes=duration,
            batch_kind=kind,
            batch_deadline=deadline,
        )
        store.reservations[rsv.id] = rsv
        return rsv

    resource_id, start, rank = fit
    rsv = Reservation(
        id=store.next_id("rsv"),
        user=user,
        tier=tier,
        tier_rank=rank,
        resource=resource_id,
        unit_count=unit_count,
        units=[],
        start=start,
        end=start + duration,
        mode="batch",
        state="queued",
        created_at=now,
        reserved_minutes=duration,
        batch_kind=kind,
        batch_deadline=deadline,
    )
    store.reservations[rsv.id] = rsv
    free = free_units(store, resource_id, start, start + duration)
    _confirm(store, rsv, free[:unit_count])
    return rsv


def _try_place_batch(store: "Store", cfg: "CoreConfig", rsv: Reservation, now: int) -> bool:
    fit = _batch_fit(
        store, rsv.tier, rsv.batch_kind or "", rsv.unit_count, rsv.reserved_minutes, rsv.batch_deadline, now
    )
    if fit is None:
        return False
    resource_id, start, rank = fit
    pol = policy_for(store, resource_id)
    if pol.max_active is not None and _count_active_under_policy(store, rsv.user, pol) >= pol.max_active:
        return False
    rsv.resource = resource_id
    rsv.tier_rank = rank
    rsv.start = start
    rsv.end = start + rsv.reserved_minutes
    free = free_units(store, resource_id, start, rsv.end)
    _confirm(store, rsv, free[: rsv.unit_count])
    return True


# ---------------------------------------------------------------------------
# Reclaim / preemption
# ---------------------------------------------------------------------------


def owner_reclaim(
    store: "Store", cfg: "CoreConfig", resource_id: str, actor: str, admin: bool, now: int
) -> list[str]:
    """Owner-initiated reclaim: schedule preemption (with grace) of every
    non-owner active reservation on an owned resource."""
    resource = catalog.get_resource(store, resource_id)
    if not admin and (resource.owner == "shared" or actor != resource.owner):
        raise CommandError("forbidden-actor", f"{actor} does not own {resource_id}")
    pol = policy_for(store, resource_id)
    if not pol.owner_reclaim:
        raise CommandError("owner-reclaim-denied", "policy forbids owner reclaim")
    grace = pol.reclaim_grace if pol.reclaim_grace is not None else cfg.default_reclaim_grace
    scheduled = []
    for rid in sorted(store.reservations):
        rsv = store.reservations[rid]
        if (
            rsv.resource == resource_id
            and rsv.state == "active"
            and rsv.user != resource.owner
            and rid not in store.pending_reclaims
        ):
            store.pending_reclaims[rid] = {"fire_at": now + grace, "forced": True}
            store.notify(
                rsv.user,
                "preemption warning",
                f"{rsv.id} will be reclaimed by the resource owner in {grace}m",
                now,
            )
            scheduled.append(rid)
    return scheduled


def _reservation_idle_streak(store: "Store", rsv: Reservation, now: int) -> int:
    return min(telemetry.idle_streak(store, rsv.resource, u, now) for u in rsv.units)


def _fire_preemption(store: "Store", cfg: "CoreConfig", rsv: Reservation, now: int) -> None:
    cut = rsv.start if rsv.state == "confirmed" else min(align_up(now), rsv.end)
    _transition(rsv, "preempted")
    rsv.truncated_at = max(cut, rsv.start)
    store.pending_reclaims.pop(rsv.id, None)
    if not rsv.compensated:
        economy.compensate_preemption(store, rsv.id, now)
    store.notify(rsv.user, "reservation preempted", f"{rsv.id} preempted at {now}", now)
    if rsv.truncated_at < rsv.end:
        _capacity_freed(store, cfg, rsv.resource, rsv.truncated_at, rsv.end, rsv.units, now)


def reclaim_scan(store: "Store", cfg: "CoreConfig", now: int) -> list[str]:
    """Idle-reclaim pass: schedule preemption for actives idle beyond the
    policy threshold, and fire pending preemptions whose grace elapsed.
    Idle-triggered preemptions re-check idleness at fire time; owner-forced
    ones fire unconditionally."""
    fired: list[str] = []
    for rid in sorted(store.reservations):
        rsv = store.reservations[rid]
        pending = store.pending_reclaims.get(rid)
        if pending is not None:
            if rsv.state not in ("active", "confirmed"):
                store.pending_reclaims.pop(rid, None)
                continue
            if now >= pending["fire_at"]:
                pol = policy_for(store, rsv.resource)
                still_idle = (
                    pol.reclaim_idle_after is not None
                    and _reservation_idle_streak(store, rsv, now) > pol.reclaim_idle_after
                )
                if pending["forced"] or still_idle:
                    _fire_preemption(store, cfg, rsv, now)
                    fired.append(rid)
                else:
                    store.pending_reclaims.pop(rid, None)
            continue
        if rsv.state != "active":
            continue
        pol = policy_for(store, rsv.resource)
        if pol.reclaim_idle_after is None:
            continue
        if _reservation_idle_streak(store, rsv, now) > pol.reclaim_idle_after:
            grace = pol.reclaim_grace if pol.reclaim_grace is not None else cfg.default_reclaim_grace
            store.pending_reclaims[rid] = {"fire_at": now + grace, "forced": False}
            store.notify(
                rsv.user,
                "preemption warning",
                f"{rsv.id} idle beyond {pol.reclaim_idle_after}m; reclaim in {grace}m unless used",
                now,
            )
    return fired


# ---------------------------------------------------------------------------
# Periodic tick
# ---------------------------------------------------------------------------


def _capacity_freed(
    store: "Store",
    cfg: "CoreConfig",
    resource_id: str,
    start: int,
    end: int,
    units: list[int],
    now: int,
) -> None:
    promote_queued(store, cfg, resource_id, now)
    generate_offers(store, cfg, resource_id, start, end, units, now)


def _settle_due_auctions(store: "Store", cfg: "CoreConfig", now: int) -> list[str]:
    settled = []
    for aid in sorted(store.auctions):
        auction = store.auctions[aid]
        if auction.state != "open" or now < auction.deadline:
            continue
        economy.settle_auction(store, aid, now)
        if auction.state == "settled":
            winner_rsv = None
            for rid in sorted(store.reservations):
                rsv = store.reservations[rid]
                if rsv.auction == aid and rsv.user == auction.winner and rsv.state == "queued":
                    winner_rsv = rsv
                    break
            confirmed = False
            if winner_rsv is not None and now <= winner_rsv.start:
                free = free_units(store, auction.resource, winner_rsv.start, winner_rsv.end)
                if len(free) >= winner_rsv.unit_count:
                    _confirm(store, winner_rsv, free[: winner_rsv.unit_count])
                    confirmed = True
            if confirmed:
                economy.charge_winner(store, auction, now)
                store.notify(
                    auction.winner or "",
                    "auction won",
                    f"auction {aid} won for {auction.winning_amount} tokens",
                    now,
                )
            else:
                # capacity (or the reservation) vanished: no payment taken
                auction.state = "void"
                auction.winner = None
                auction.winning_amount = None
        if auction.state == "void":
            promote_queued(store, cfg, auction.resource, now)
        settled.append(aid)
    return settled


def tick(store: "Store", cfg: "CoreConfig", now: int) -> dict:
    """One scheduler heartbeat: expiry, activation, completion, offer TTLs,
    auction settlement, idle reclaim, then a promotion pass. Runs on the
    serialized command stream like every other mutation."""
    expired: list[str] = []
    activated: list[str] = []
    completed: list[str] = []

    for rid in sorted(store.reservations):
        rsv = store.reservations[rid]
        if rsv.state == "queued":
            if rsv.mode == "batch" and rsv.resource == "":
                if rsv.batch_deadline is not None and now > rsv.batch_deadline:
                    _transition(rsv, "expired")
                    store.notify(rsv.user, "reservation expired", f"{rsv.id} missed its deadline", now)
                    expired.append(rid)
            elif now > rsv.start:
                _transition(rsv, "expired")
                store.notify(rsv.user, "reservation expired", f"{rsv.id} start passed while queued", now)
                expired.append(rid)

    for rid in sorted(store.reservations):
        rsv = store.reservations[rid]
        if rsv.state == "confirmed" and rsv.start <= now:
            _transition(rsv, "active")
            activated.append(rid)

    for rid in sorted(store.reservations):
        rsv = store.reservations[rid]
        if rsv.state == "active" and rsv.effective_end() <= now:
            _transition(rsv, "completed")
            if not rsv.accrued:
                busy = telemetry.busy_minutes(store, rsv.resource, rsv.units, rsv.start, rsv.end)
                reserved_total = rsv.reserved_minutes * len(rsv.units)
                store.ledger.append(
                    now,
                    rsv.user,
                    economy.accrual_delta(reserved_total, busy),
                    "accrual" if busy > 0 else "no_show_penalty",
                    rsv.id,
                )
                rsv.accrued = True
            store.pending_reclaims.pop(rid, None)
            completed.append(rid)

    offers_expired: list[str] = []
    for oid in sorted(store.offers):
        offer = store.offers[oid]
        if offer.state == "open" and now >= offer.issued_at + offer.ttl:
            offer.state = "expired"
            offers_expired.append(oid)
            advance_offer_chain(store, cfg, offer, now)

    auctions_settled = _settle_due_auctions(store, cfg, now)
    preempted = reclaim_scan(store, cfg, now)

    promoted: list[str] = []
    for rid in sorted(store.resources):
        promoted.extend(promote_queued(store, cfg, rid, now))

    return {
        "expired": expired,
        "activated": activated,
        "completed": completed,
        "offers_expired": offers_expired,
        "auctions_settled": auctions_settled,
        "preempted": preempted,
        "promoted": promoted,
    }
