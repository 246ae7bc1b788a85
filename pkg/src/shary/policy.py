"""Reservation-policy language: parser, printer, resolution, advance checks.

Grammar (EBNF):

    policy     = "policy" string "{" { stmt } "}" ;
    stmt       = applies | tier | maxdur | maxact | reclaim | contention | ownerrule ;
    applies    = "applies" "to" ( "kind" ident | "resource" string ) ";" ;
    tier       = "tier" string "advance" duration [ "priority" int ] ";" ;
    maxdur     = "max_duration" duration ";" ;
    maxact     = "max_active" int ";" ;
    reclaim    = "reclaim" "if" "idle" ">" duration "grace" duration ";" ;
    contention = "on_contention" ( "queue" | "auction" "deadline" duration ) ";" ;
    ownerrule  = "owner" "may_reclaim" ( "always" | "never" ) ";" ;
    duration   = int ( "m" | "h" | "d" ) ;

`#` starts a comment running to end of line. Strings are double-quoted; the
only escape is `\\"`. Parsing is total: any byte sequence yields either a
Policy or a list of positioned diagnostics, never an exception. Unset
optional statements resolve to defaults (max_duration 24h, contention queue,
owner may_reclaim always, max_active unlimited, no idle reclaim) and the
pretty-printer emits the resolved canonical form, so print-then-parse is a
fixpoint.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

from .clock import DAY, GRAIN, HOUR
from .errors import CommandError

if TYPE_CHECKING:
    from .catalog import Resource

MAX_DIAGNOSTICS = 50

DEFAULT_MAX_DURATION = 24 * HOUR
DEFAULT_TIER_ADVANCE = 14 * DAY


@dataclass(frozen=True)
class Tier:
    name: str
    advance_minutes: int
    rank: int


@dataclass(frozen=True)
class Diagnostic:
    line: int  # 1-based
    column: int  # 1-based
    message: str
    severity: str = "error"

    def to_doc(self) -> dict:
        return {
            "line": self.line,
            "column": self.column,
            "message": self.message,
            "severity": self.severity,
        }


@dataclass
class Policy:
    name: str
    applies_kind: str | None = None
    applies_resource: str | None = None
    tiers: list[Tier] = field(default_factory=list)
    max_duration: int = DEFAULT_MAX_DURATION
    max_active: int | None = None
    reclaim_idle_after: int | None = None
    reclaim_grace: int | None = None
    contention_mode: str = "queue"  # "queue" | "auction"
    auction_deadline: int | None = None
    owner_reclaim: bool = True

    def target(self) -> tuple[str, str]:
        """(specificity, value) key used for shadowing and conflict checks."""
        if self.applies_resource is not None:
            return ("resource", self.applies_resource)
        return ("kind", self.applies_kind or "")

    def tier(self, name: str) -> Tier:
        for t in self.tiers:
            if t.name == name:
                return t
        raise CommandError("unknown-tier", f"policy {self.name!r} has no tier {name!r}")

    def to_doc(self) -> dict:
        return {
            "name": self.name,
            "applies_kind": self.applies_kind,
            "applies_resource": self.applies_resource,
            "tiers": [
                {"name": t.name, "advance_minutes": t.advance_minutes, "rank": t.rank}
                for t in self.tiers
            ],
            "max_duration": self.max_duration,
            "max_active": self.max_active,
            "reclaim_idle_after": self.reclaim_idle_after,
            "reclaim_grace": self.reclaim_grace,
            "contention_mode": self.contention_mode,
            "auction_deadline": self.auction_deadline,
            "owner_reclaim": self.owner_reclaim,
        }


BUILTIN_DEFAULT = Policy(
    name="built-in-default",
    tiers=[Tier("default", DEFAULT_TIER_ADVANCE, 1)],
)


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""(?P<ws>[ \t\r\n]+)
      | (?P<comment>\#[^\n]*)
      | (?P<duration>[0-9]+[mhd])
      | (?P<int>[0-9]+)
      | (?P<ident>[A-Za-z_][A-Za-z0-9_\-]*)
      | (?P<string>"(?:\\"|[^"\n])*")
      | (?P<sym>[{};>])
    """,
    re.VERBOSE,
)

_UNIT_MINUTES = {"m": 1, "h": HOUR, "d": DAY}


@dataclass(frozen=True)
class _Token:
    kind: str  # duration | int | ident | string | sym | error | eof
    text: str
    offset: int


def _lex(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            ch = source[pos]
            if ch == '"':
                # unterminated string: swallow to end of line so the parser
                # reports one diagnostic, not one per character
                end = source.find("\n", pos)
                end = n if end == -1 else end
                tokens.append(_Token("error", source[pos:end], pos))
                pos = end
            else:
                tokens.append(_Token("error", ch, pos))
                pos += 1
            continue
        kind = m.lastgroup or "error"
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, m.group(), m.start()))
        pos = m.end()
    tokens.append(_Token("eof", "", n))
    return tokens


def _line_starts(source: str) -> list[int]:
    starts = [0]
    for i, ch in enumerate(source):
        if ch == "\n":
            starts.append(i + 1)
    return starts


def _position(starts: list[int], offset: int) -> tuple[int, int]:
    import bisect

    line = bisect.bisect_right(starts, offset)
    return line, offset - starts[line - 1] + 1


def _unquote(text: str) -> str:
    return text[1:-1].replace('\\"', '"')


def _quote(value: str) -> str:
    return '"' + value.replace('"', '\\"') + '"'


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_STMT_KEYWORDS = (
    "applies",
    "tier",
    "max_duration",
    "max_active",
    "reclaim",
    "on_contention",
    "owner",
)


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _lex(source)
        self.starts = _line_starts(source)
        self.pos = 0
        self.diagnostics: list[Diagnostic] = []

    # -- token plumbing ------------------------------------------------
    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.text == word

    def error(self, message: str, tok: _Token | None = None) -> None:
        if len(self.diagnostics) >= MAX_DIAGNOSTICS:
            return
        tok = tok or self.peek()
        line, col = _position(self.starts, tok.offset)
        self.diagnostics.append(Diagnostic(line, col, message))

    def expect_keyword(self, word: str) -> bool:
        if self.at_keyword(word):
            self.take()
            return True
        self.error(f"expected '{word}'")
        return False

    def expect_sym(self, sym: str) -> bool:
        tok = self.peek()
        if tok.kind == "sym" and tok.text == sym:
            self.take()
            return True
        self.error(f"expected '{sym}'")
        return False

    def expect_string(self, what: str) -> str | None:
        tok = self.peek()
        if tok.kind == "string":
            self.take()
            return _unquote(tok.text)
        self.error(f"expected {what} string")
        return None

    def expect_int(self, what: str) -> int | None:
        tok = self.peek()
        if tok.kind == "int":
            self.take()
            return int(tok.text)
        self.error(f"expected {what}")
        return None

    def expect_duration(self, what: str) -> int | None:
        tok = self.peek()
        if tok.kind == "duration":
            self.take()
            return int(tok.text[:-1]) * _UNIT_MINUTES[tok.text[-1]]
        if tok.kind == "int":
            self.error("bad duration literal: missing m/h/d suffix")
            self.take()
            return None
        self.error(f"expected {what} duration")
        return None

    def sync_stmt(self) -> None:
        """Skip to just past the next ';' (or stop before '}'/EOF)."""
        while True:
            tok = self.peek()
            if tok.kind == "eof":
                return
            if tok.kind == "sym" and tok.text == "}":
                return
            if tok.kind == "sym" and tok.text == ";":
                self.take()
                return
            self.take()

    # -- grammar -------------------------------------------------------
    def parse(self) -> Policy | None:
        if not self.at_keyword("policy"):
            self.error("expected 'policy'")
            return None
        self.take()
        name = self.expect_string("policy name")
        if name is None:
            return None
        if not self.expect_sym("{"):
            return None

        policy = Policy(name=name)
        seen: dict[str, _Token] = {}
        tier_ranks_auto: list[int] = []

        while True:
            tok = self.peek()
            if tok.kind == "eof":
                self.error("expected '}'")
                break
            if tok.kind == "sym" and tok.text == "}":
                self.take()
                break
            if tok.kind != "ident" or tok.text not in _STMT_KEYWORDS:
                self.error("expected a policy statement")
                self.sync_stmt()
                continue
            if len(self.diagnostics) >= MAX_DIAGNOSTICS:
                return None
            before = len(self.diagnostics)
            self.stmt(tok.text, policy, seen, tier_ranks_auto)
            if len(self.diagnostics) > before:
                self.sync_stmt()

        tok = self.peek()
        if tok.kind != "eof":
            self.error("expected end of input")

        self.check_semantics(policy)
        return policy if not self.diagnostics else None

    def stmt(
        self,
        keyword: str,
        policy: Policy,
        seen: dict[str, _Token],
        tier_ranks_auto: list[int],
    ) -> None:
        tok = self.take()  # the keyword
        if keyword != "tier" and keyword in seen:
            self.error(f"duplicate '{keyword}' statement", tok)
            return
        seen[keyword] = tok

        if keyword == "applies":
            if not self.expect_keyword("to"):
                return
            if self.at_keyword("kind"):
                self.take()
                ident = self.peek()
                if ident.kind != "ident":
                    self.error("expected resource kind")
                    return
                self.take()
                policy.applies_kind = ident.text
            elif self.at_keyword("resource"):
                self.take()
                value = self.expect_string("resource id")
                if value is None:
                    return
                policy.applies_resource = value
            else:
                self.error("expected 'kind' or 'resource'")
                return
            self.expect_sym(";")

        elif keyword == "tier":
            name_tok = self.peek()
            name = self.expect_string("tier name")
            if name is None:
                return
            if not self.expect_keyword("advance"):
                return
            advance = self.expect_duration("advance")
            if advance is None:
                return
            rank: int | None = None
            if self.at_keyword("priority"):
                self.take()
                rank = self.expect_int("priority rank")
                if rank is None:
                    return
            if not self.expect_sym(";"):
                return
            if any(t.name == name for t in policy.tiers):
                self.error(f"duplicate tier {name!r}", name_tok)
                return
            if advance <= 0:
                self.error("advance window must be positive", name_tok)
                return
            if rank is None:
                rank = len(policy.tiers) + 1
                tier_ranks_auto.append(rank)
            if any(t.rank == rank for t in policy.tiers):
                self.error(f"duplicate priority rank {rank}", name_tok)
                return
            policy.tiers.append(Tier(name, advance, rank))

        elif keyword == "max_duration":
            value = self.expect_duration("max_duration")
            if value is None:
                return
            if value < GRAIN:
                self.error(f"max_duration must be at least {GRAIN}m", tok)
                return
            policy.max_duration = value
            self.expect_sym(";")

        elif keyword == "max_active":
            value = self.expect_int("max_active count")
            if value is None:
                return
            if value < 1:
                self.error("max_active must be >= 1", tok)
                return
            policy.max_active = value
            self.expect_sym(";")

        elif keyword == "reclaim":
            if not self.expect_keyword("if"):
                return
            if not self.expect_keyword("idle"):
                return
            if not self.expect_sym(">"):
                return
            idle = self.expect_duration("idle threshold")
            if idle is None:
                return
            if not self.expect_keyword("grace"):
                return
            grace = self.expect_duration("grace")
            if grace is None:
                return
            if grace > idle:
                self.error("grace must not exceed the idle threshold", tok)
                return
            policy.reclaim_idle_after = idle
            policy.reclaim_grace = grace
            self.expect_sym(";")

        elif keyword == "on_contention":
            if self.at_keyword("queue"):
                self.take()
                policy.contention_mode = "queue"
                policy.auction_deadline = None
            elif self.at_keyword("auction"):
                self.take()
                if not self.expect_keyword("deadline"):
                    return
                deadline = self.expect_duration("deadline")
                if deadline is None:
                    return
                policy.contention_mode = "auction"
                policy.auction_deadline = deadline
            else:
                self.error("expected 'queue' or 'auction'")
                return
            self.expect_sym(";")

        elif keyword == "owner":
            if not self.expect_keyword("may_reclaim"):
                return
            if self.at_keyword("always"):
                self.take()
                policy.owner_reclaim = True
            elif self.at_keyword("never"):
                self.take()
                policy.owner_reclaim = False
            else:
                self.error("expected 'always' or 'never'")
                return
            self.expect_sym(";")

    def check_semantics(self, policy: Policy) -> None:
        if self.diagnostics:
            return
        if policy.applies_kind is None and policy.applies_resource is None:
            self.error("policy must declare 'applies to'", self.tokens[0])


def parse_policy(source: str | bytes) -> tuple[Policy | None, list[Diagnostic]]:
    """Parse DSL text. Returns (policy, []) on success or (None, diagnostics).

    Total over arbitrary input: bytes are decoded with replacement and any
    malformed text comes back as diagnostics, never an exception.
    """
    if isinstance(source, bytes):
        source = source.decode("utf-8", errors="replace")
    parser = _Parser(source)
    policy = parser.parse()
    if parser.diagnostics:
        return None, parser.diagnostics
    return policy, []


# ---------------------------------------------------------------------------
# Pretty printer
# ---------------------------------------------------------------------------


def format_duration(minutes: int) -> str:
    if minutes % DAY == 0:
        return f"{minutes // DAY}d"
    if minutes % HOUR == 0:
        return f"{minutes // HOUR}h"
    return f"{minutes}m"


def pretty_print(policy: Policy) -> str:
    """Canonical DSL text; parse(pretty_print(p)) is structurally equal to p."""
    lines = [f"policy {_quote(policy.name)} {{"]
    if policy.applies_resource is not None:
        lines.append(f"  applies to resource {_quote(policy.applies_resource)};")
    else:
        lines.append(f"  applies to kind {policy.applies_kind};")
    for tier in policy.tiers:
        lines.append(
            f"  tier {_quote(tier.name)} advance {format_duration(tier.advance_minutes)}"
            f" priority {tier.rank};"
        )
    lines.append(f"  max_duration {format_duration(policy.max_duration)};")
    if policy.max_active is not None:
        lines.append(f"  max_active {policy.max_active};")
    if policy.reclaim_idle_after is not None:
        lines.append(
            f"  reclaim if idle > {format_duration(policy.reclaim_idle_after)}"
            f" grace {format_duration(policy.reclaim_grace or 0)};"
        )
    if policy.contention_mode == "auction":
        lines.append(
            f"  on_contention auction deadline {format_duration(policy.auction_deadline or 0)};"
        )
    else:
        lines.append("  on_contention queue;")
    lines.append(
        f"  owner may_reclaim {'always' if policy.owner_reclaim else 'never'};"
    )
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Resolution and checks
# ---------------------------------------------------------------------------


def validate_policy_set(policies: Iterable[Policy]) -> None:
    """Reject two installed policies aimed at the same target."""
    seen: dict[tuple[str, str], str] = {}
    for policy in policies:
        key = policy.target()
        if key in seen:
            raise CommandError(
                "ambiguous-policy",
                f"policies {seen[key]!r} and {policy.name!r} both target {key[1]!r}",
            )
        seen[key] = policy.name


def effective_policy(resource: "Resource", installed: Iterable[Policy]) -> Policy:
    """Explicit-resource policy if present, else kind policy, else the
    built-in default. Two candidates at the same specificity is a
    configuration error."""
    by_resource = [p for p in installed if p.applies_resource == resource.id]
    if len(by_resource) > 1:
        raise CommandError(
            "ambiguous-policy",
            f"multiple policies target resource {resource.id!r}",
        )
    if by_resource:
        return by_resource[0]
    by_kind = [p for p in installed if p.applies_resource is None and p.applies_kind == resource.kind]
    if len(by_kind) > 1:
        raise CommandError(
            "ambiguous-policy", f"multiple policies target kind {resource.kind!r}"
        )
    if by_kind:
        return by_kind[0]
    return BUILTIN_DEFAULT


def check_advance(
    policy: Policy, tier_name: str, now: int, start: int
) -> tuple[bool, str | None]:
    """Advance-window gate: booking is allowed iff start - now <= the tier's
    window (boundary inclusive)."""
    tier = policy.tier(tier_name)  # raises unknown-tier
    if start - now <= tier.advance_minutes:
        return True, None
    return False, "advance window exceeded"
