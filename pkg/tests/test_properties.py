"""Cross-module invariants driven by hypothesis."""

import hypothesis.strategies as st
from hypothesis import HealthCheck, given, settings
from hypothesis.stateful import RuleBasedStateMachine, initialize, invariant, rule

from shary import seed
from shary.clock import ManualClock, align_up
from shary.config import CoreConfig
from shary.core import Core

from conftest import QUEUE_POLICY, T0


USERS = ["ada", "bo", "cy", "dee", "eve", "flo"]


def fresh_core(now=T0):
    clock = ManualClock(now)
    core = Core(clock=clock, config=CoreConfig())
    seed.load_inventory(core)
    core.execute("policy.install", {"source": QUEUE_POLICY}, actor="admin")
    return core, clock


def no_overlap_violations(store):
    """Brute-force pairwise interval intersection per unit."""
    bad = []
    for rid in store.resources:
        per_unit = {}
        for rsv in store.reservations.values():
            if rsv.resource != rid or rsv.state not in ("confirmed", "active"):
                continue
            for unit in rsv.units:
                per_unit.setdefault(unit, []).append((rsv.start, rsv.effective_end(), rsv.id))
        for unit, spans in per_unit.items():
            for i, a in enumerate(spans):
                for b in spans[i + 1:]:
                    if a[0] < b[1] and b[0] < a[1]:
                        bad.append((rid, unit, a, b))
    return bad


def capacity_violations(store):
    """At any reservation boundary, active units never exceed capacity."""
    bad = []
    for rid, resource in store.resources.items():
        holds = [
            r for r in store.reservations.values()
            if r.resource == rid and r.state in ("confirmed", "active")
        ]
        points = sorted({r.start for r in holds} | {r.effective_end() - 1 for r in holds})
        for t in points:
            used = sum(
                len(r.units) for r in holds if r.start <= t < r.effective_end()
            )
            if used > resource.units:
                bad.append((rid, t, used))
    return bad


class SchedulerMachine(RuleBasedStateMachine):
    @initialize()
    def setup(self):
        self.core, self.clock = fresh_core()
        self.next_user = 0

    def _user(self, i):
        return USERS[i % len(USERS)]

    @rule(
        user=st.integers(0, 5),
        resource=st.sampled_from(["l40s-cluster", "a16-cluster"]),
        offset=st.integers(0, 40),
        slots=st.integers(1, 16),
        units=st.integers(1, 4),
        tier=st.sampled_from(["staff", "student"]),
    )
    def request(self, user, resource, offset, slots, units, tier):
        base = align_up(self.clock.now())
        self.core.execute(
            "reservation.request",
            {
                "tier": tier,
                "resource": resource,
                "unit_count": units,
                "start": base + offset * 15,
                "end": base + (offset + slots) * 15,
            },
            actor=self._user(user),
        )

    @rule(pick=st.integers(0, 10_000))
    def cancel_something(self, pick):
        cancellable = [
            r for r in self.core.store.reservations.values()
            if r.state in ("queued", "confirmed")
        ]
        if cancellable:
            rsv = cancellable[pick % len(cancellable)]
            self.core.execute("reservation.cancel", {"id": rsv.id}, actor=rsv.user)

    @rule(pick=st.integers(0, 10_000), frac=st.floats(0.0, 1.0))
    def release_something(self, pick, frac):
        active = [r for r in self.core.store.reservations.values() if r.state == "active"]
        if active:
            rsv = active[pick % len(active)]
            at = min(rsv.start + int((rsv.end - rsv.start) * frac), rsv.end - 1)
            self.core.execute("reservation.release", {"id": rsv.id, "at": at}, actor=rsv.user)

    @rule(minutes=st.integers(1, 120))
    def advance_and_tick(self, minutes):
        self.clock.advance(minutes)
        self.core.execute("tick", {}, actor="system")

    @invariant()
    def no_overlap(self):
        if not hasattr(self, "core"):
            return
        assert no_overlap_violations(self.core.store) == []

    @invariant()
    def capacity_conserved(self):
        if not hasattr(self, "core"):
            return
        assert capacity_violations(self.core.store) == []

    @invariant()
    def ledger_reconstructs(self):
        if not hasattr(self, "core"):
            return
        ledger = self.core.store.ledger
        assert ledger.recompute_balances() == ledger.balances


SchedulerMachine.TestCase.settings = settings(
    max_examples=30,
    stateful_step_count=30,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much],
)
TestSchedulerMachine = SchedulerMachine.TestCase


@given(st.data())
@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
def test_replay_any_command_sequence(data):
    core, clock = fresh_core()
    n_ops = data.draw(st.integers(1, 25))
    for _ in range(n_ops):
        op = data.draw(st.sampled_from(["request", "cancel", "tick", "release"]))
        if op == "request":
            start = align_up(clock.now()) + data.draw(st.integers(0, 30)) * 15
            core.execute(
                "reservation.request",
                {
                    "tier": data.draw(st.sampled_from(["staff", "student"])),
                    "resource": data.draw(st.sampled_from(["l40s-cluster", "a16-cluster"])),
                    "unit_count": data.draw(st.integers(1, 4)),
                    "start": start,
                    "end": start + data.draw(st.integers(1, 10)) * 15,
                },
                actor=data.draw(st.sampled_from(USERS)),
            )
        elif op == "cancel":
            live = [r for r in core.store.reservations.values() if r.state in ("queued", "confirmed")]
            if live:
                rsv = live[data.draw(st.integers(0, len(live) - 1))]
                core.execute("reservation.cancel", {"id": rsv.id}, actor=rsv.user)
        elif op == "release":
            active = [r for r in core.store.reservations.values() if r.state == "active"]
            if active:
                rsv = active[data.draw(st.integers(0, len(active) - 1))]
                at = data.draw(st.integers(rsv.start, rsv.end - 1))
                core.execute("reservation.release", {"id": rsv.id, "at": at}, actor=rsv.user)
        else:
            clock.advance(data.draw(st.integers(1, 90)))
            core.execute("tick", {}, actor="system")
    replayed = Core.replay(list(core.log.events), config=CoreConfig())
    assert replayed.store.snapshot_bytes() == core.store.snapshot_bytes()


@given(
    st.lists(
        st.tuples(st.sampled_from(USERS), st.integers(1, 60), st.integers(0, 500)),
        max_size=6,
        unique_by=lambda t: t[0],
    )
)
@settings(max_examples=200, deadline=None)
def test_settlement_independent_of_bid_arrival_order(bid_tuples):
    from shary.economy import Bid, pick_winner

    bids = [Bid(u, a, t) for u, a, t in bid_tuples]
    winner = pick_winner(bids)
    for rotation in range(len(bids)):
        rotated = bids[rotation:] + bids[:rotation]
        other = pick_winner(rotated)
        assert (winner is None) == (other is None)
        if winner:
            assert other.user == winner.user and other.amount == winner.amount


@given(st.integers(1, 64), st.integers(0, 128), st.integers(0, 128))
@settings(max_examples=200, deadline=None)
def test_accrual_plus_bonus_never_exceeds_125(reserved_slots, busy_slots, freed_slots):
    from shary.economy import accrual_delta, early_release_bonus_delta

    reserved = reserved_slots * 15
    busy = min(busy_slots * 15, reserved)
    freed = min(freed_slots * 15, reserved)
    total = accrual_delta(reserved, busy) + early_release_bonus_delta(freed, reserved)
    assert -50 <= total <= 125
