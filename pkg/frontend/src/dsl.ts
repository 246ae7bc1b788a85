// Policy DSL support for the form editor: parse text into a form model and
// emit canonical text from a form model. The emitter is restricted to the
// grammar, so emitted text always parses; installation authority stays with
// the server (the form only posts the text to /v1/policies).
//
// Grammar:
//   policy     = "policy" string "{" { stmt } "}" ;
//   stmt       = applies | tier | maxdur | maxact | reclaim | contention | ownerrule ;
//   applies    = "applies" "to" ( "kind" ident | "resource" string ) ";" ;
//   tier       = "tier" string "advance" duration [ "priority" int ] ";" ;
//   maxdur     = "max_duration" duration ";" ;
//   maxact     = "max_active" int ";" ;
//   reclaim    = "reclaim" "if" "idle" ">" duration "grace" duration ";" ;
//   contention = "on_contention" ( "queue" | "auction" "deadline" duration ) ";" ;
//   ownerrule  = "owner" "may_reclaim" ( "always" | "never" ) ";" ;
//   duration   = int ( "m" | "h" | "d" ) ;
// `#` comments to end of line; strings are double-quoted, `\"` only escape.

export interface Diagnostic {
  readonly line: number; // 1-based
  readonly column: number; // 1-based
  readonly message: string;
  readonly severity: "error" | "warning";
}

export interface TierForm {
  name: string;
  advanceMinutes: number;
  priority: number;
}

export interface PolicyForm {
  name: string;
  applies: { target: "kind" | "resource"; value: string };
  tiers: TierForm[];
  maxDurationMinutes: number;
  maxActive: number | null;
  reclaim: { idleMinutes: number; graceMinutes: number } | null;
  contention: { mode: "queue" } | { mode: "auction"; deadlineMinutes: number };
  ownerMayReclaim: boolean;
}

export interface ParseResult {
  form: PolicyForm | null;
  diagnostics: Diagnostic[];
}

const HOUR = 60;
const DAY = 1440;
const GRAIN = 15;
export const DEFAULT_MAX_DURATION = 24 * HOUR;
const MAX_DIAGNOSTICS = 50;

export function defaultForm(): PolicyForm {
  return {
    name: "new-policy",
    applies: { target: "kind", value: "gpu" },
    tiers: [{ name: "default", advanceMinutes: 14 * DAY, priority: 1 }],
    maxDurationMinutes: DEFAULT_MAX_DURATION,
    maxActive: null,
    reclaim: null,
    contention: { mode: "queue" },
    ownerMayReclaim: true,
  };
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

type TokenKind = "duration" | "int" | "ident" | "string" | "sym" | "error" | "eof";

interface Token {
  kind: TokenKind;
  text: string;
  offset: number;
}

const TOKEN_RE =
  /([ \t\r\n]+)|(#[^\n]*)|([0-9]+[mhd])|([0-9]+)|([A-Za-z_][A-Za-z0-9_\-]*)|("(?:\\"|[^"\n])*")|([{};>])/y;

const UNIT_MINUTES: Record<string, number> = { m: 1, h: HOUR, d: DAY };

function lex(source: string): Token[] {
  const tokens: Token[] = [];
  let pos = 0;
  while (pos < source.length) {
    TOKEN_RE.lastIndex = pos;
    const m = TOKEN_RE.exec(source);
    if (m === null) {
      const ch = source[pos] ?? "";
      if (ch === '"') {
        let end = source.indexOf("\n", pos);
        if (end === -1) end = source.length;
        tokens.push({ kind: "error", text: source.slice(pos, end), offset: pos });
        pos = end;
      } else {
        tokens.push({ kind: "error", text: ch, offset: pos });
        pos += 1;
      }
      continue;
    }
    const kinds: (TokenKind | null)[] = [
      null, null, "duration", "int", "ident", "string", "sym",
    ];
    for (let group = 1; group < m.length; group++) {
      if (m[group] !== undefined) {
        const kind = kinds[group - 1];
        if (kind) tokens.push({ kind, text: m[group]!, offset: m.index });
        break;
      }
    }
    pos = TOKEN_RE.lastIndex;
  }
  tokens.push({ kind: "eof", text: "", offset: source.length });
  return tokens;
}

function lineStarts(source: string): number[] {
  const starts = [0];
  for (let i = 0; i < source.length; i++) {
    if (source[i] === "\n") starts.push(i + 1);
  }
  return starts;
}

function positionOf(starts: number[], offset: number): [number, number] {
  let lo = 0;
  let hi = starts.length - 1;
  while (lo < hi) {
    const mid = (lo + hi + 1) >> 1;
    if (starts[mid]! <= offset) lo = mid;
    else hi = mid - 1;
  }
  return [lo + 1, offset - starts[lo]! + 1];
}

function unquote(text: string): string {
  return text.slice(1, -1).replace(/\\"/g, '"');
}

function quote(value: string): string {
  return '"' + value.replace(/"/g, '\\"') + '"';
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

const STMT_KEYWORDS = new Set([
  "applies", "tier", "max_duration", "max_active", "reclaim", "on_contention", "owner",
]);

class Parser {
  private tokens: Token[];
  private starts: number[];
  private pos = 0;
  readonly diagnostics: Diagnostic[] = [];

  constructor(source: string) {
    this.tokens = lex(source);
    this.starts = lineStarts(source);
  }

  private peek(): Token {
    return this.tokens[this.pos]!;
  }

  private take(): Token {
    const tok = this.tokens[this.pos]!;
    if (tok.kind !== "eof") this.pos += 1;
    return tok;
  }

  private atKeyword(word: string): boolean {
    const tok = this.peek();
    return tok.kind === "ident" && tok.text === word;
  }

  private error(message: string, tok?: Token): void {
    if (this.diagnostics.length >= MAX_DIAGNOSTICS) return;
    const at = tok ?? this.peek();
    const [line, column] = positionOf(this.starts, at.offset);
    this.diagnostics.push({ line, column, message, severity: "error" });
  }

  private expectKeyword(word: string): boolean {
    if (this.atKeyword(word)) {
      this.take();
      return true;
    }
    this.error(`expected '${word}'`);
    return false;
  }

  private expectSym(sym: string): boolean {
    const tok = this.peek();
    if (tok.kind === "sym" && tok.text === sym) {
      this.take();
      return true;
    }
    this.error(`expected '${sym}'`);
    return false;
  }

  private expectString(what: string): string | null {
    const tok = this.peek();
    if (tok.kind === "string") {
      this.take();
      return unquote(tok.text);
    }
    this.error(`expected ${what} string`);
    return null;
  }

  private expectInt(what: string): number | null {
    const tok = this.peek();
    if (tok.kind === "int") {
      this.take();
      return parseInt(tok.text, 10);
    }
    this.error(`expected ${what}`);
    return null;
  }

  private expectDuration(what: string): number | null {
    const tok = this.peek();
    if (tok.kind === "duration") {
      this.take();
      const unit = tok.text[tok.text.length - 1]!;
      return parseInt(tok.text.slice(0, -1), 10) * UNIT_MINUTES[unit]!;
    }
    if (tok.kind === "int") {
      this.error("bad duration literal: missing m/h/d suffix");
      this.take();
      return null;
    }
    this.error(`expected ${what} duration`);
    return null;
  }

  private syncStmt(): void {
    for (;;) {
      const tok = this.peek();
      if (tok.kind === "eof") return;
      if (tok.kind === "sym" && tok.text === "}") return;
      if (tok.kind === "sym" && tok.text === ";") {
        this.take();
        return;
      }
      this.take();
    }
  }

  parse(): PolicyForm | null {
    if (!this.atKeyword("policy")) {
      this.error("expected 'policy'");
      return null;
    }
    this.take();
    const name = this.expectString("policy name");
    if (name === null) return null;
    if (!this.expectSym("{")) return null;

    const form: PolicyForm = {
      name,
      applies: { target: "kind", value: "" },
      tiers: [],
      maxDurationMinutes: DEFAULT_MAX_DURATION,
      maxActive: null,
      reclaim: null,
      contention: { mode: "queue" },
      ownerMayReclaim: true,
    };
    let appliesSeen = false;
    const seen = new Set<string>();

    for (;;) {
      const tok = this.peek();
      if (tok.kind === "eof") {
        this.error("expected '}'");
        break;
      }
      if (tok.kind === "sym" && tok.text === "}") {
        this.take();
        break;
      }
      if (tok.kind !== "ident" || !STMT_KEYWORDS.has(tok.text)) {
        this.error("expected a policy statement");
        this.syncStmt();
        continue;
      }
      if (this.diagnostics.length >= MAX_DIAGNOSTICS) return null;
      const before = this.diagnostics.length;
      appliesSeen = this.stmt(tok.text, form, seen) || appliesSeen;
      if (this.diagnostics.length > before) this.syncStmt();
    }

    if (this.peek().kind !== "eof") this.error("expected end of input");
    if (this.diagnostics.length === 0 && !appliesSeen) {
      this.error("policy must declare 'applies to'", this.tokens[0]);
    }
    return this.diagnostics.length === 0 ? form : null;
  }

  /** Returns true when the statement was an `applies` clause. */
  private stmt(keyword: string, form: PolicyForm, seen: Set<string>): boolean {
    const tok = this.take();
    if (keyword !== "tier" && seen.has(keyword)) {
      this.error(`duplicate '${keyword}' statement`, tok);
      return false;
    }
    seen.add(keyword);

    switch (keyword) {
      case "applies": {
        if (!this.expectKeyword("to")) return false;
        if (this.atKeyword("kind")) {
          this.take();
          const ident = this.peek();
          if (ident.kind !== "ident") {
            this.error("expected resource kind");
            return false;
          }
          this.take();
          form.applies = { target: "kind", value: ident.text };
        } else if (this.atKeyword("resource")) {
          this.take();
          const value = this.expectString("resource id");
          if (value === null) return false;
          form.applies = { target: "resource", value };
        } else {
          this.error("expected 'kind' or 'resource'");
          return false;
        }
        this.expectSym(";");
        return true;
      }
      case "tier": {
        const nameTok = this.peek();
        const name = this.expectString("tier name");
        if (name === null) return false;
        if (!this.expectKeyword("advance")) return false;
        const advance = this.expectDuration("advance");
        if (advance === null) return false;
        let priority: number | null = null;
        if (this.atKeyword("priority")) {
          this.take();
          priority = this.expectInt("priority rank");
          if (priority === null) return false;
        }
        if (!this.expectSym(";")) return false;
        if (form.tiers.some((t) => t.name === name)) {
          this.error(`duplicate tier ${JSON.stringify(name)}`, nameTok);
          return false;
        }
        if (advance <= 0) {
          this.error("advance window must be positive", nameTok);
          return false;
        }
        const rank = priority ?? form.tiers.length + 1;
        if (form.tiers.some((t) => t.priority === rank)) {
          this.error(`duplicate priority rank ${rank}`, nameTok);
          return false;
        }
        form.tiers.push({ name, advanceMinutes: advance, priority: rank });
        return false;
      }
      case "max_duration": {
        const value = this.expectDuration("max_duration");
        if (value === null) return false;
        if (value < GRAIN) {
          this.error(`max_duration must be at least ${GRAIN}m`, tok);
          return false;
        }
        form.maxDurationMinutes = value;
        this.expectSym(";");
        return false;
      }
      case "max_active": {
        const value = this.expectInt("max_active count");
        if (value === null) return false;
        if (value < 1) {
          this.error("max_active must be >= 1", tok);
          return false;
        }
        form.maxActive = value;
        this.expectSym(";");
        return false;
      }
      case "reclaim": {
        if (!this.expectKeyword("if")) return false;
        if (!this.expectKeyword("idle")) return false;
        if (!this.expectSym(">")) return false;
        const idle = this.expectDuration("idle threshold");
        if (idle === null) return false;
        if (!this.expectKeyword("grace")) return false;
        const grace = this.expectDuration("grace");
        if (grace === null) return false;
        if (grace > idle) {
          this.error("grace must not exceed the idle threshold", tok);
          return false;
        }
        form.reclaim = { idleMinutes: idle, graceMinutes: grace };
        this.expectSym(";");
        return false;
      }
      case "on_contention": {
        if (this.atKeyword("queue")) {
          this.take();
          form.contention = { mode: "queue" };
        } else if (this.atKeyword("auction")) {
          this.take();
          if (!this.expectKeyword("deadline")) return false;
          const deadline = this.expectDuration("deadline");
          if (deadline === null) return false;
          form.contention = { mode: "auction", deadlineMinutes: deadline };
        } else {
          this.error("expected 'queue' or 'auction'");
          return false;
        }
        this.expectSym(";");
        return false;
      }
      case "owner": {
        if (!this.expectKeyword("may_reclaim")) return false;
        if (this.atKeyword("always")) {
          this.take();
          form.ownerMayReclaim = true;
        } else if (this.atKeyword("never")) {
          this.take();
          form.ownerMayReclaim = false;
        } else {
          this.error("expected 'always' or 'never'");
          return false;
        }
        this.expectSym(";");
        return false;
      }
      default:
        return false;
    }
  }
}

export function parsePolicy(source: string): ParseResult {
  const parser = new Parser(source);
  const form = parser.parse();
  return { form: parser.diagnostics.length === 0 ? form : null, diagnostics: parser.diagnostics };
}

// ---------------------------------------------------------------------------
// Emitter
// ---------------------------------------------------------------------------

export function formatDuration(minutes: number): string {
  if (minutes % DAY === 0) return `${minutes / DAY}d`;
  if (minutes % HOUR === 0) return `${minutes / HOUR}h`;
  return `${minutes}m`;
}

export function emitPolicy(form: PolicyForm): string {
  const lines = [`policy ${quote(form.name)} {`];
  if (form.applies.target === "resource") {
    lines.push(`  applies to resource ${quote(form.applies.value)};`);
  } else {
    lines.push(`  applies to kind ${form.applies.value};`);
  }
  for (const tier of form.tiers) {
    lines.push(
      `  tier ${quote(tier.name)} advance ${formatDuration(tier.advanceMinutes)}` +
        ` priority ${tier.priority};`,
    );
  }
  lines.push(`  max_duration ${formatDuration(form.maxDurationMinutes)};`);
  if (form.maxActive !== null) {
    lines.push(`  max_active ${form.maxActive};`);
  }
  if (form.reclaim !== null) {
    lines.push(
      `  reclaim if idle > ${formatDuration(form.reclaim.idleMinutes)}` +
        ` grace ${formatDuration(form.reclaim.graceMinutes)};`,
    );
  }
  if (form.contention.mode === "auction") {
    lines.push(`  on_contention auction deadline ${formatDuration(form.contention.deadlineMinutes)};`);
  } else {
    lines.push("  on_contention queue;");
  }
  lines.push(`  owner may_reclaim ${form.ownerMayReclaim ? "always" : "never"};`);
  lines.push("}");
  return lines.join("\n") + "\n";
}

/** Build a form from a server policy document (used when loading an existing
 * policy into the editor; equivalent to parsing its pretty-printed source). */
export function formFromPolicyDoc(doc: {
  name: string;
  applies_kind: string | null;
  applies_resource: string | null;
  tiers: { name: string; advance_minutes: number; rank: number }[];
  max_duration: number;
  max_active: number | null;
  reclaim_idle_after: number | null;
  reclaim_grace: number | null;
  contention_mode: string;
  auction_deadline: number | null;
  owner_reclaim: boolean;
}): PolicyForm {
  return {
    name: doc.name,
    applies:
      doc.applies_resource !== null
        ? { target: "resource", value: doc.applies_resource }
        : { target: "kind", value: doc.applies_kind ?? "" },
    tiers: doc.tiers.map((t) => ({
      name: t.name,
      advanceMinutes: t.advance_minutes,
      priority: t.rank,
    })),
    maxDurationMinutes: doc.max_duration,
    maxActive: doc.max_active,
    reclaim:
      doc.reclaim_idle_after !== null
        ? { idleMinutes: doc.reclaim_idle_after, graceMinutes: doc.reclaim_grace ?? 0 }
        : null,
    contention:
      doc.contention_mode === "auction"
        ? { mode: "auction", deadlineMinutes: doc.auction_deadline ?? 0 }
        : { mode: "queue" },
    ownerMayReclaim: doc.owner_reclaim,
  };
}
