"""Half-open integer intervals [start, end).

Back-to-back intervals [a,b) and [b,c) never overlap; that boundary
convention is load-bearing for the whole scheduler and is pinned by tests.
"""

from __future__ import annotations

Interval = tuple[int, int]


def overlaps(a_start: int, a_end: int, b_start: int, b_end: int) -> bool:
    return a_start < b_end and b_start < a_end


def intersect(a_start: int, a_end: int, b_start: int, b_end: int) -> Interval | None:
    start = max(a_start, b_start)
    end = min(a_end, b_end)
    return (start, end) if start < end else None


def complement(window: Interval, busy: list[Interval]) -> list[Interval]:
    """Maximal disjoint free intervals of `window` not covered by `busy`."""
    w_start, w_end = window
    free: list[Interval] = []
    cursor = w_start
    for b_start, b_end in sorted(busy):
        if b_end <= cursor or b_start >= w_end:
            continue
        if b_start > cursor:
            free.append((cursor, min(b_start, w_end)))
        cursor = max(cursor, b_end)
        if cursor >= w_end:
            break
    if cursor < w_end:
        free.append((cursor, w_end))
    return free


def total_minutes(spans: list[Interval]) -> int:
    return sum(end - start for start, end in spans)
