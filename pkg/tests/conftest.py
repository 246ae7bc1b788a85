import pytest

from shary import seed
from shary.clock import ManualClock
from shary.config import CoreConfig
from shary.core import Core

# aligned, arbitrary "present" far from epoch edge cases
T0 = 27_000_000
assert T0 % 15 == 0

QUEUE_POLICY = """
policy "gpu-queue" {
  applies to kind gpu;
  tier "staff" advance 30d priority 1;
  tier "student" advance 7d priority 2;
  max_duration 8h;
  on_contention queue;
}
"""


@pytest.fixture
def clock():
    return ManualClock(T0)


@pytest.fixture
def core(clock):
    """Fresh core with the seed catalog and a queue-mode GPU policy."""
    c = Core(clock=clock, config=CoreConfig())
    seed.load_inventory(c)
    c.execute("policy.install", {"source": QUEUE_POLICY}, actor="admin")
    return c


@pytest.fixture
def bare_core(clock):
    """Core with drivers registered but an empty catalog."""
    return Core(clock=clock, config=CoreConfig())


def book(core, user, resource="l40s-cluster", units=1, start=None, hours=2, tier="staff", **kw):
    start = T0 + 60 if start is None else start
    payload = {
        "tier": tier,
        "resource": resource,
        "unit_count": units,
        "start": start,
        "end": start + int(hours * 60),
        "mode": kw.pop("mode", "interactive"),
    }
    payload.update(kw)
    result, _ = core.execute("reservation.request", payload, actor=user)
    return result


def tick(core, clock, at=None):
    if at is not None:
        clock.set(at)
    result, _ = core.execute("tick", {}, actor="system")
    return result
