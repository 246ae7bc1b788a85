"""Token ledger and sealed-bid auctions.

Tokens are integers and every formula uses floor division, so the ledger has
no rounding drift and balances are always reconstructible as the plain sum
of a user's deltas. Auction payments are burned to a system sink (tracked
separately from user balances) rather than redistributed.

Scoring constants: usage accrual is worth up to 100 tokens per reservation
(scaled by the fraction of reserved time actually used), a no-show costs 50,
an early release earns up to 25 pro rata, a preemption is compensated with
25, and every new account starts with a 500-token grant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .errors import CommandError

if TYPE_CHECKING:
    from .store import Store

REASONS = (
    "accrual",
    "no_show_penalty",
    "early_release_bonus",
    "auction_payment",
    "preemption_compensation",
    "grant",
)

ACCRUAL_SCALE = 100
NO_SHOW_PENALTY = 50
EARLY_RELEASE_SCALE = 25
PREEMPTION_COMPENSATION = 25
INITIAL_GRANT = 500


@dataclass(frozen=True)
class LedgerEntry:
    ts: int
    user: str
    delta: int
    reason: str
    ref: str = ""

    def to_doc(self) -> dict:
        return {
            "ts": self.ts,
            "user": self.user,
            "delta": self.delta,
            "reason": self.reason,
            "ref": self.ref,
        }


@dataclass
class Ledger:
    balances: dict[str, int] = field(default_factory=dict)
    entries: list[LedgerEntry] = field(default_factory=list)
    sink_total: int = 0

    def append(self, ts: int, user: str, delta: int, reason: str, ref: str = "") -> LedgerEntry:
        if reason not in REASONS:
            raise ValueError(f"unknown ledger reason {reason!r}")
        entry = LedgerEntry(ts, user, delta, reason, ref)
        self.entries.append(entry)
        self.balances[user] = self.balances.get(user, 0) + delta
        return entry

    def balance(self, user: str) -> int:
        return self.balances.get(user, 0)

    def ensure_account(self, user: str, now: int) -> bool:
        """Grant the one-time starting balance on first touch."""
        if user in self.balances:
            return False
        self.append(now, user, INITIAL_GRANT, "grant", "initial")
        return True

    def recompute_balances(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for entry in self.entries:
            out[entry.user] = out.get(entry.user, 0) + entry.delta
        return out

    def to_doc(self) -> dict:
        return {
            "balances": dict(sorted(self.balances.items())),
            "entries": [e.to_doc() for e in self.entries],
            "sink_total": self.sink_total,
        }


# ---------------------------------------------------------------------------
# Scoring formulas
# ---------------------------------------------------------------------------


def accrual_delta(reserved_minutes: int, busy_minutes: int) -> int:
    """Usage-alignment score: floor(100 * min(B/R, 1)), minus the 50-token
    no-show penalty when B is zero."""
    if reserved_minutes <= 0:
        raise CommandError("zero-reserved", "reserved minutes must be positive")
    if busy_minutes < 0:
        raise CommandError("invalid-busy", "busy minutes must be non-negative")
    earned = min(ACCRUAL_SCALE * busy_minutes // reserved_minutes, ACCRUAL_SCALE)
    penalty = NO_SHOW_PENALTY if busy_minutes == 0 else 0
    return earned - penalty


def early_release_bonus_delta(freed_minutes: int, reserved_minutes: int) -> int:
    """floor(25 * F / R): up to 25 tokens for handing back the full interval."""
    if reserved_minutes <= 0:
        raise CommandError("zero-reserved", "reserved minutes must be positive")
    if not 0 <= freed_minutes <= reserved_minutes:
        raise CommandError("invalid-freed", "freed minutes must be within [0, reserved]")
    return EARLY_RELEASE_SCALE * freed_minutes // reserved_minutes


# ---------------------------------------------------------------------------
# Auctions
# ---------------------------------------------------------------------------


@dataclass
class Bid:
    user: str
    amount: int
    placed_at: int

    def to_doc(self) -> dict:
        return {"user": self.user, "amount": self.amount, "placed_at": self.placed_at}


@dataclass
class Auction:
    id: str
    resource: str
    start: int
    end: int
    unit_count: int
    deadline: int
    opened_at: int
    bids: dict[str, Bid] = field(default_factory=dict)  # one live bid per user
    state: str = "open"  # open | settled | void
    winner: str | None = None
    winning_amount: int | None = None

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "resource": self.resource,
            "start": self.start,
            "end": self.end,
            "unit_count": self.unit_count,
            "deadline": self.deadline,
            "opened_at": self.opened_at,
            "bids": [self.bids[u].to_doc() for u in sorted(self.bids)],
            "state": self.state,
            "winner": self.winner,
            "winning_amount": self.winning_amount,
        }


def open_auction(
    store: "Store",
    resource: str,
    start: int,
    end: int,
    unit_count: int,
    deadline: int,
    now: int,
) -> Auction:
    auction = Auction(
        id=store.next_id("auc"),
        resource=resource,
        start=start,
        end=end,
        unit_count=unit_count,
        deadline=deadline,
        opened_at=now,
    )
    store.auctions[auction.id] = auction
    return auction


def find_open_auction(store: "Store", resource: str, start: int, end: int) -> Auction | None:
    for aid in sorted(store.auctions):
        auction = store.auctions[aid]
        if (
            auction.state == "open"
            and auction.resource == resource
            and auction.start == start
            and auction.end == end
        ):
            return auction
    return None


def place_bid(store: "Store", auction_id: str, user: str, amount: int, now: int) -> Bid:
    auction = store.auctions.get(auction_id)
    if auction is None:
        raise CommandError("unknown-auction", f"no auction {auction_id!r}")
    if auction.state != "open" or now > auction.deadline:
        raise CommandError("auction-closed", f"auction {auction_id} is closed")
    if not isinstance(amount, int) or isinstance(amount, bool) or amount < 1:
        raise CommandError("non-positive-bid", "bid amount must be a positive integer")
    if amount > store.ledger.balance(user):
        raise CommandError(
            "insufficient-tokens",
            f"bid {amount} exceeds balance {store.ledger.balance(user)}",
        )
    # A re-bid replaces the previous amount and takes a fresh placed_at.
    auction.bids[user] = Bid(user, amount, now)
    return auction.bids[user]


def pick_winner(bids: list[Bid]) -> Bid | None:
    """First-price sealed bid: highest amount, ties to the earlier placed_at,
    then to the lexicographically smaller user id."""
    if not bids:
        return None
    return min(bids, key=lambda b: (-b.amount, b.placed_at, b.user))


def settle_auction(store: "Store", auction_id: str, now: int) -> Auction:
    """Resolve the auction. The caller (scheduler tick) confirms the winner's
    queued reservation and decides void-vs-settled; this function only picks
    the winner and moves the payment."""
    auction = store.auctions.get(auction_id)
    if auction is None:
        raise CommandError("unknown-auction", f"no auction {auction_id!r}")
    if auction.state != "open":
        raise CommandError("already-settled", f"auction {auction_id} is {auction.state}")
    if now < auction.deadline:
        raise CommandError("not-yet-deadline", f"auction {auction_id} is still open")
    winner = pick_winner(list(auction.bids.values()))
    if winner is None:
        auction.state = "void"
        return auction
    auction.state = "settled"
    auction.winner = winner.user
    auction.winning_amount = winner.amount
    return auction


def charge_winner(store: "Store", auction: Auction, now: int) -> None:
    """Move the winning bid user -> sink, exactly once per auction."""
    assert auction.winner is not None and auction.winning_amount is not None
    store.ledger.append(
        now, auction.winner, -auction.winning_amount, "auction_payment", auction.id
    )
    store.ledger.sink_total += auction.winning_amount


def compensate_preemption(store: "Store", reservation_id: str, now: int) -> int:
    """+25 tokens to a preempted user, guarded against double invocation."""
    rsv = store.reservations.get(reservation_id)
    if rsv is None:
        raise CommandError("unknown-id", f"no reservation {reservation_id!r}")
    if rsv.state != "preempted":
        raise CommandError("not-preempted", f"reservation {reservation_id} is {rsv.state}")
    if rsv.compensated:
        raise CommandError("already-compensated", f"reservation {reservation_id} already compensated")
    rsv.compensated = True
    store.ledger.append(now, rsv.user, PREEMPTION_COMPENSATION, "preemption_compensation", rsv.id)
    return PREEMPTION_COMPENSATION
