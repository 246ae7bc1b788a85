"""Append-only event log: the system of record.

One JSON object per line, each carrying a CRC32 of its canonical encoding.
Sequence numbers are gapless from 1; full state is reconstructible by
replaying the log through the same command handlers that produced it.
Periodic snapshots (written by the core every N events) shortcut replay but
can never change its result.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import CorruptLog


def canonical_json(doc: object) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class Event:
    seq: int
    ts: int
    kind: str
    actor: str
    payload: dict

    def to_doc(self) -> dict:
        return {
            "seq": self.seq,
            "ts": self.ts,
            "kind": self.kind,
            "actor": self.actor,
            "payload": self.payload,
        }


def encode_event(event: Event) -> str:
    doc = event.to_doc()
    doc["crc"] = zlib.crc32(canonical_json(event.to_doc()).encode("utf-8"))
    return canonical_json(doc)


def decode_line(line: str, lineno: int = 0) -> Event:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorruptLog(f"line {lineno}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict) or "crc" not in doc:
        raise CorruptLog(f"line {lineno}: missing crc")
    crc = doc.pop("crc")
    if zlib.crc32(canonical_json(doc).encode("utf-8")) != crc:
        raise CorruptLog(f"line {lineno}: crc mismatch")
    try:
        return Event(
            seq=doc["seq"],
            ts=doc["ts"],
            kind=doc["kind"],
            actor=doc["actor"],
            payload=doc["payload"],
        )
    except KeyError as exc:
        raise CorruptLog(f"line {lineno}: missing field {exc.args[0]!r}") from None


class EventLog:
    """In-memory log, optionally mirrored to an NDJSON file.

    When a path is given and the file exists, its events are loaded and
    verified on construction (gapless from 1, CRC per line).
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.events: list[Event] = []
        self._fh = None
        if self.path is not None and self.path.exists():
            self.events = load_events(self.path)
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = self.path.open("a", encoding="utf-8")

    def head_seq(self) -> int:
        return self.events[-1].seq if self.events else 0

    def append(self, ts: int, kind: str, actor: str, payload: dict) -> Event:
        event = Event(self.head_seq() + 1, ts, kind, actor, payload)
        self.events.append(event)
        if self._fh is not None:
            self._fh.write(encode_event(event) + "\n")
            self._fh.flush()
        return event

    def since(self, seq: int) -> list[Event]:
        return [e for e in self.events if e.seq > seq]

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def load_events(path: str | Path) -> list[Event]:
    """Read and verify a log file: CRC per line, seq gapless from 1."""
    events: list[Event] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            events.append(decode_line(line, lineno))
    verify_gapless(events)
    return events


def verify_gapless(events: list[Event]) -> None:
    expected = 1
    for event in events:
        if event.seq != expected:
            raise CorruptLog(f"sequence gap: expected {expected}, found {event.seq}")
        expected += 1
