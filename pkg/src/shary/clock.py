"""Minute-based time handling shared by every module.

All timestamps in the system are integers: whole minutes since the Unix
epoch, UTC. Reservations snap to a 15-minute grid. ISO 8601 conversion
happens only at the CLI/README boundary; the core and the HTTP API speak
integer minutes so replayed state is byte-identical.
"""

from __future__ import annotations

import datetime as _dt

GRAIN = 15  # scheduling granularity, minutes

MINUTE = 1
HOUR = 60
DAY = 1440


def from_iso(text: str) -> int:
    """Parse an ISO 8601 timestamp into epoch minutes (UTC, truncated)."""
    raw = text.strip()
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    dt = _dt.datetime.fromisoformat(raw)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=_dt.timezone.utc)
    return int(dt.timestamp()) // 60


def to_iso(minutes: int) -> str:
    dt = _dt.datetime.fromtimestamp(minutes * 60, tz=_dt.timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%MZ")


def is_aligned(minutes: int) -> bool:
    return minutes % GRAIN == 0


def align_down(minutes: int) -> int:
    return minutes - (minutes % GRAIN)


def align_up(minutes: int) -> int:
    return minutes if minutes % GRAIN == 0 else minutes + (GRAIN - minutes % GRAIN)


class Clock:
    """Wall clock; the service stamps commands with this."""

    def now(self) -> int:
        return int(_dt.datetime.now(tz=_dt.timezone.utc).timestamp()) // 60


class ManualClock(Clock):
    """Test/simulation clock advanced explicitly."""

    def __init__(self, start: int = 0):
        self._now = start

    def now(self) -> int:
        return self._now

    def set(self, minutes: int) -> None:
        if minutes < self._now:
            raise ValueError("clock may not move backwards")
        self._now = minutes

    def advance(self, minutes: int) -> int:
        self.set(self._now + minutes)
        return self._now
