"""Utilization telemetry: ingest, activity classification, usage reports.

Drivers are expected to sample roughly once a minute; ingestion tolerates
gaps and any minute without a sample counts as utilization 0 / 0 W. A
15-minute window is idle when its peak utilization stays under 5%, batch
when its mean exceeds 60%, and dev otherwise (both thresholds strict, so
exactly 5.0 is not idle and exactly 60.0 is not batch).
"""

from __future__ import annotations

from typing import TYPE_CHECKING

from .clock import GRAIN
from .errors import CommandError
from .intervals import intersect

if TYPE_CHECKING:
    from .store import Store

IDLE_MAX_UTIL = 5.0
BATCH_MEAN_UTIL = 60.0

# sample tuples are (ts, util, watts)


def _validate_sample(store: "Store", doc: object) -> tuple[str, int, int, float, float]:
    if not isinstance(doc, dict):
        raise CommandError("invalid-sample", "sample must be a JSON object")
    try:
        resource = doc["resource"]
        unit = doc["unit"]
        ts = doc["ts"]
        util = doc["util"]
        watts = doc.get("watts", 0)
    except KeyError as exc:
        raise CommandError("invalid-sample", f"missing key {exc.args[0]!r}") from None
    if resource not in store.resources:
        raise CommandError("unknown-resource", f"no resource {resource!r}")
    if not isinstance(unit, int) or isinstance(unit, bool) or not (
        0 <= unit < store.resources[resource].units
    ):
        raise CommandError("invalid-sample", f"unit {unit!r} out of range")
    if not isinstance(ts, int) or isinstance(ts, bool):
        raise CommandError("invalid-sample", "ts must be integer minutes")
    if not isinstance(util, (int, float)) or isinstance(util, bool) or not (0 <= util <= 100):
        raise CommandError("out-of-range-utilization", f"util {util!r} not in [0, 100]")
    if not isinstance(watts, (int, float)) or isinstance(watts, bool) or watts < 0:
        raise CommandError("invalid-sample", "watts must be non-negative")
    return resource, unit, ts, float(util), float(watts)


def _stream_tail(store: "Store", resource: str, unit: int) -> int | None:
    stream = store.samples.get(resource, {}).get(unit, [])
    return stream[-1][0] if stream else None


def ingest_sample(store: "Store", doc: object) -> None:
    resource, unit, ts, util, watts = _validate_sample(store, doc)
    tail = _stream_tail(store, resource, unit)
    if tail is not None and ts < tail:
        raise CommandError("out-of-order-timestamp", f"ts {ts} precedes last sample at {tail}")
    store.samples.setdefault(resource, {}).setdefault(unit, []).append((ts, util, watts))


def ingest_batch(store: "Store", docs: list) -> int:
    """Validate every sample (including intra-batch ordering) before storing
    any, so a bad sample mid-batch cannot commit a partial batch."""
    if not isinstance(docs, list) or not docs:
        raise CommandError("invalid-sample", "samples must be a non-empty list")
    validated: list[tuple[str, int, int, float, float]] = []
    tails: dict[tuple[str, int], int | None] = {}
    for doc in docs:
        fields = _validate_sample(store, doc)
        key = (fields[0], fields[1])
        tail = tails.get(key, _stream_tail(store, fields[0], fields[1]))
        if tail is not None and fields[2] < tail:
            raise CommandError(
                "out-of-order-timestamp", f"ts {fields[2]} precedes last sample at {tail}"
            )
        tails[key] = fields[2]
        validated.append(fields)
    for resource, unit, ts, util, watts in validated:
        store.samples.setdefault(resource, {}).setdefault(unit, []).append((ts, util, watts))
    return len(validated)


def minute_series(
    store: "Store", resource: str, unit: int, start: int, end: int
) -> list[tuple[float, float]]:
    """(util, watts) per minute over [start, end); missing minutes are
    (0, 0), the last sample in a minute wins."""
    series = [(0.0, 0.0)] * (end - start)
    stream = store.samples.get(resource, {}).get(unit, [])
    for ts, util, watts in stream:
        if start <= ts < end:
            series[ts - start] = (util, watts)
    return series


def _classify_series(utils: list[float]) -> str:
    if not utils or max(utils) < IDLE_MAX_UTIL:
        return "idle"
    if sum(utils) / len(utils) > BATCH_MEAN_UTIL:
        return "batch"
    return "dev"


def classify_window(store: "Store", resource: str, unit: int, start: int, end: int) -> str:
    """idle / dev / batch over a window of at least 15 minutes."""
    if end - start < GRAIN:
        raise CommandError("window-too-short", f"window must be >= {GRAIN} minutes")
    utils = [u for u, _ in minute_series(store, resource, unit, start, end)]
    return _classify_series(utils)


def minute_classes(
    store: "Store", resource: str, unit: int, start: int, end: int
) -> list[str]:
    """Class per minute of [start, end), each minute inheriting its enclosing
    absolute 15-minute grain's classification. Grain-anchored so reports over
    adjacent windows add up exactly."""
    if start >= end:
        return []
    grain_lo = (start // GRAIN) * GRAIN
    grain_hi = ((end + GRAIN - 1) // GRAIN) * GRAIN
    series = minute_series(store, resource, unit, grain_lo, grain_hi)
    out: list[str] = []
    for g in range(grain_lo, grain_hi, GRAIN):
        cls = _classify_series([u for u, _ in series[g - grain_lo : g - grain_lo + GRAIN]])
        for minute in range(g, g + GRAIN):
            if start <= minute < end:
                out.append(cls)
    return out


def busy_minutes(
    store: "Store", resource: str, units: list[int], start: int, end: int
) -> int:
    """Total dev+batch minutes across the given units over [start, end)."""
    total = 0
    for unit in units:
        total += sum(
            1 for cls in minute_classes(store, resource, unit, start, end) if cls != "idle"
        )
    return total


def idle_streak(store: "Store", resource: str, unit: int, now: int) -> int:
    """Minutes of the maximal idle suffix ending at `now`, evaluated in
    trailing 15-minute windows. The streak never reaches back past the start
    of the covering reservation (no samples at all means idle since start)."""
    floor = _streak_floor(store, resource, unit, now)
    streak = 0
    t = now
    while t > floor:
        w_start = max(floor, t - GRAIN)
        utils = [u for u, _ in minute_series(store, resource, unit, w_start, t)]
        if _classify_series(utils) != "idle":
            break
        streak += t - w_start
        t = w_start
    return streak


def _streak_floor(store: "Store", resource: str, unit: int, now: int) -> int:
    for rid in sorted(store.reservations):
        rsv = store.reservations[rid]
        if (
            rsv.state == "active"
            and rsv.resource == resource
            and unit in rsv.units
            and rsv.start <= now
        ):
            return rsv.start
    stream = store.samples.get(resource, {}).get(unit, [])
    return stream[0][0] if stream else now


def usage_report(store: "Store", subject: str, start: int, end: int) -> dict:
    """Aggregate classification minutes over the subject's reservations
    intersected with [start, end). Subject is a user id or a resource id."""
    if subject in store.resources:
        relevant = [r for r in store.reservations.values() if r.resource == subject]
    elif subject in store.users or subject in store.ledger.balances:
        relevant = [r for r in store.reservations.values() if r.user == subject]
    else:
        raise CommandError("unknown-subject", f"no user or resource {subject!r}")

    dev = batch = idle = 0
    unit_minutes = 0
    watt_minutes = 0.0
    for rsv in relevant:
        if rsv.state not in ("active", "completed", "released", "preempted"):
            continue
        span = intersect(rsv.start, rsv.end, start, end)
        if span is None:
            continue
        for unit in rsv.units:
            for cls in minute_classes(store, rsv.resource, unit, span[0], span[1]):
                if cls == "dev":
                    dev += 1
                elif cls == "batch":
                    batch += 1
                else:
                    idle += 1
            unit_minutes += span[1] - span[0]
            watt_minutes += sum(
                w for _, w in minute_series(store, rsv.resource, unit, span[0], span[1])
            )
    return {
        "subject": subject,
        "window": {"start": start, "end": end},
        "busy_minutes": dev + batch,
        "idle_minutes": idle,
        "dev_minutes": dev,
        "batch_minutes": batch,
        "unit_hours": unit_minutes / 60,
        "energy_kwh": watt_minutes / 60 / 1000,
    }
