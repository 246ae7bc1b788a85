import pytest
from hypothesis import given, settings, strategies as st

from shary.broker import AccessGrant, BrokerWorker, desired_state, reconcile
from shary.drivers import DriverAction, SimP4Driver

from conftest import T0, book, tick


def grants_of(driver):
    return {AccessGrant(u, r, n) for (u, r, n) in driver.grant_keys()}


# -- desired_state -------------------------------------------------------------


def test_desired_state_one_grant_per_unit(core, clock):
    booked = book(core, "alice", units=2, start=T0 + 60)
    tick(core, clock, at=T0 + 60)
    grants = desired_state(clock.now(), core.store.reservations.values())
    assert len(grants) == 2
    assert {g.unit for g in grants} == set(booked["units"])
    assert all(g.user == "alice" and g.resource == "l40s-cluster" for g in grants)


def test_desired_state_empty_without_reservations(core):
    assert desired_state(T0, core.store.reservations.values()) == set()


def test_desired_state_confirmed_past_start_edge(core, clock):
    book(core, "alice", start=T0 + 60)
    # still confirmed (no tick yet), but start has passed: activation edge
    clock.set(T0 + 60)
    grants = desired_state(clock.now(), core.store.reservations.values())
    assert len(grants) == 1


def test_desired_state_ended_reservation_revokes(core, clock):
    book(core, "alice", start=T0 + 60, hours=1)
    tick(core, clock, at=T0 + 60)
    # one minute past the end: no grant even though state is still "active"
    clock.set(T0 + 121)
    assert desired_state(clock.now(), core.store.reservations.values()) == set()


# -- reconcile -----------------------------------------------------------------


def g(user, unit=0, resource="sw"):
    return AccessGrant(user, resource, unit, 0, 100)


def test_reconcile_grant_from_empty():
    actions = reconcile(set(), {g("alice")}, now=0)
    assert [a.kind for a in actions] == ["grant"]
    assert actions[0].user == "alice"


def test_reconcile_fixpoint():
    assert reconcile({g("alice")}, {g("alice")}, now=0) == []


def test_reconcile_mixed_diff_and_grace():
    observed = {g("a"), g("b", 1)}
    desired = {g("b", 1), g("c", 2)}
    revoked_at: dict = {}
    actions = reconcile(observed, desired, now=100, revoked_at=revoked_at,
                        sessions={("a", "sw", 0)}, grace=5)
    kinds = {(a.kind, a.user) for a in actions}
    assert kinds == {("grant", "c"), ("revoke", "a")}
    # grace not yet elapsed: no terminate. After 5 minutes with the session
    # still up (and the grant revoked), terminate fires.
    actions2 = reconcile(desired, desired, now=105, revoked_at=revoked_at,
                         sessions={("a", "sw", 0)}, grace=5)
    assert [(a.kind, a.user) for a in actions2] == [("terminate_best_effort", "a")]
    # once the session is gone the pending record clears
    actions3 = reconcile(desired, desired, now=110, revoked_at=revoked_at, sessions=set(), grace=5)
    assert actions3 == [] and revoked_at == {}


def test_reconcile_converges_after_apply():
    driver = SimP4Driver("p4")
    observed = {g("a"), g("b", 1)}
    for grant in observed:
        driver.apply(DriverAction("grant", grant.user, grant.resource, grant.unit))
    desired = {g("b", 1), g("x", 3)}
    actions = reconcile(grants_of(driver), desired, now=0)
    for action in actions:
        driver.apply(action)
    assert grants_of(driver) == desired
    assert reconcile(grants_of(driver), desired, now=0) == []


@given(
    st.sets(st.tuples(st.sampled_from("abcdef"), st.integers(0, 3)), max_size=8),
    st.sets(st.tuples(st.sampled_from("abcdef"), st.integers(0, 3)), max_size=8),
)
@settings(max_examples=300, deadline=None)
def test_reconcile_convergence_property(observed_keys, desired_keys):
    driver = SimP4Driver("p4")
    observed = {g(u, n) for u, n in observed_keys}
    desired = {g(u, n) for u, n in desired_keys}
    for grant in observed:
        driver.apply(DriverAction("grant", grant.user, grant.resource, grant.unit))
    for action in reconcile(grants_of(driver), desired, now=50):
        driver.apply(action)
    assert grants_of(driver) == desired
    assert reconcile(grants_of(driver), desired, now=50) == []


# -- worker loop ---------------------------------------------------------------


def test_worker_grants_after_confirmation(core, clock):
    booked = book(core, "alice", start=T0 + 60)
    worker = BrokerWorker(core, "gpu-fleet")
    assert worker.run_once() == []  # nothing active yet
    tick(core, clock, at=T0 + 60)
    actions = worker.run_once()
    assert [(a.kind, a.user, a.unit) for a in actions] == [("grant", "alice", booked["units"][0])]
    driver = core.store.drivers["gpu-fleet"]
    assert driver.has_grant("alice", "l40s-cluster", booked["units"][0])
    # convergence: an immediate second pass does nothing
    assert worker.run_once() == []


def test_worker_revokes_after_end(core, clock):
    booked = book(core, "alice", start=T0 + 60, hours=1)
    worker = BrokerWorker(core, "gpu-fleet")
    tick(core, clock, at=T0 + 60)
    worker.run_once()
    clock.set(T0 + 121)
    actions = worker.run_once()
    assert [a.kind for a in actions] == ["revoke"]
    assert not core.store.drivers["gpu-fleet"].grant_keys()


def test_worker_retries_unreachable_driver(core, clock):
    booked = book(core, "alice", start=T0 + 60)
    worker = BrokerWorker(core, "gpu-fleet")
    driver = core.store.drivers["gpu-fleet"]
    tick(core, clock, at=T0 + 60)
    driver.reachable = False
    assert worker.run_once() == []  # down: defer
    clock.advance(1)
    assert worker.run_once() == []  # still down
    driver.reachable = True
    clock.advance(1)
    actions = worker.run_once()  # converges on the third pass
    assert [a.kind for a in actions] == ["grant"]
    assert driver.has_grant("alice", "l40s-cluster", booked["units"][0])


def test_worker_grace_then_terminate_session(core, clock):
    # the switch has no installed policy: the built-in default applies
    booked = book(core, "alice", resource="wedge-1", start=T0 + 60, hours=1, tier="default")
    worker = BrokerWorker(core, "p4-login")
    tick(core, clock, at=T0 + 60)
    worker.run_once()
    driver = core.store.drivers["p4-login"]
    driver.open_session("alice", "wedge-1", now=clock.now())
    # reservation ends; grant revoked but the session gets 5 minutes grace
    clock.set(T0 + 120)
    actions = worker.run_once()
    assert [a.kind for a in actions] == ["revoke"]
    assert driver.snapshot()["sessions"] != []
    clock.set(T0 + 124)
    assert all(a.kind != "terminate_best_effort" for a in worker.run_once())
    clock.set(T0 + 125)
    actions = worker.run_once()
    assert [a.kind for a in actions] == ["terminate_best_effort"]
    assert driver.snapshot()["sessions"] == []


def test_worker_isolates_drivers(core, clock):
    # a dead p4 driver never blocks gpu convergence
    core.store.drivers["p4-login"].reachable = False
    book(core, "alice", start=T0 + 60)
    tick(core, clock, at=T0 + 60)
    gpu_worker = BrokerWorker(core, "gpu-fleet")
    p4_worker = BrokerWorker(core, "p4-login")
    assert p4_worker.run_once() == []
    assert [a.kind for a in gpu_worker.run_once()] == ["grant"]


def test_manual_edit_flows_to_driver(core, clock):
    doc = {
        "id": "manual-1",
        "user": "ghost",
        "resource": "wedge-1",
        "units": [0],
        "start": T0,
        "end": T0 + 120,
        "state": "active",
    }
    core.execute("reservation.manual_edit", {"reservation": doc, "admin": True}, actor="admin")
    worker = BrokerWorker(core, "p4-login")
    clock.set(T0 + 1)
    actions = worker.run_once()
    assert [(a.kind, a.user) for a in actions] == [("grant", "ghost")]
    warn = [n for n in core.store.notifications if "policy bypassed" in n.body]
    assert len(warn) == 1


def test_replay_covers_broker_and_driver_events(core, clock):
    from shary.config import CoreConfig
    from shary.core import Core

    booked = book(core, "alice", start=T0 + 60)
    worker = BrokerWorker(core, "gpu-fleet")
    tick(core, clock, at=T0 + 60)
    worker.run_once()  # -> broker.apply event
    core.execute(
        "driver.exec",
        {"driver": "gpu-fleet", "verb": "instance", "args": ["create", "box"]},
        actor="alice",
    )
    core.execute(
        "driver.exec",
        {"driver": "gpu-fleet", "verb": "gpu",
         "args": ["add", "box", "l40s-cluster", str(booked["units"][0])]},
        actor="alice",
    )
    replayed = Core.replay(list(core.log.events), config=CoreConfig())
    assert replayed.store.snapshot_bytes() == core.store.snapshot_bytes()
    assert replayed.store.drivers["gpu-fleet"].to_doc() == core.store.drivers["gpu-fleet"].to_doc()


def test_no_grant_without_covering_reservation_fuzz(core, clock):
    # small in-process fuzz; the acceptance suite runs the big one
    import random

    rng = random.Random(7)
    worker = BrokerWorker(core, "gpu-fleet")
    actives = []
    for minute in range(T0, T0 + 300, 15):
        clock.set(minute)
        roll = rng.random()
        if roll < 0.4:
            result = book(core, f"user{rng.randrange(6)}",
                          start=minute + 15 * rng.randrange(1, 4), hours=1)
            if not result.get("rejected") and result["state"] == "confirmed":
                actives.append(result["id"])
        elif roll < 0.6 and actives:
            rid = actives.pop(rng.randrange(len(actives)))
            rsv = core.store.reservations[rid]
            if rsv.state == "confirmed":
                core.execute("reservation.cancel", {"id": rid}, actor=rsv.user)
        tick(core, clock)
        worker.run_once()
        grace = core.config.revoke_grace
        covered = desired_state(max(minute - grace, T0), core.store.reservations.values())
        covered |= desired_state(minute, core.store.reservations.values())
        for key in core.store.drivers["gpu-fleet"].grant_keys():
            assert AccessGrant(*key) in covered
