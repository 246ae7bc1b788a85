// Policy editor round-trip: form -> DSL -> parse -> form must reproduce
// every field value for each valid case of the shared golden corpus; every
// invalid case must yield at least one positioned diagnostic.

import assert from "node:assert/strict";
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { test } from "node:test";
import { fileURLToPath } from "node:url";

import { defaultForm, emitPolicy, formFromPolicyDoc, parsePolicy } from "../src/dsl.js";

const here = dirname(fileURLToPath(import.meta.url));
const corpusPath = join(here, "..", "..", "..", "tests", "golden", "policy_corpus.json");

interface CorpusCase {
  name: string;
  valid: boolean;
  source: string;
}

const corpus: CorpusCase[] = JSON.parse(readFileSync(corpusPath, "utf-8")).cases;
const validCases = corpus.filter((c) => c.valid);
const invalidCases = corpus.filter((c) => !c.valid);

test("corpus has the expected shape", () => {
  assert.equal(corpus.length, 50);
  assert.ok(validCases.length >= 20 && invalidCases.length >= 20);
});

test("form -> DSL -> parse -> form reproduces all field values (golden corpus)", () => {
  for (const kase of validCases) {
    const first = parsePolicy(kase.source);
    assert.equal(first.diagnostics.length, 0, `${kase.name}: ${JSON.stringify(first.diagnostics)}`);
    assert.ok(first.form, kase.name);

    const emitted = emitPolicy(first.form!);
    const second = parsePolicy(emitted);
    assert.equal(second.diagnostics.length, 0, `${kase.name} (re-parse): ${emitted}`);
    assert.deepEqual(second.form, first.form, kase.name);

    // the emitter is a fixpoint on its own output
    assert.equal(emitPolicy(second.form!), emitted, kase.name);
  }
});

test("every invalid corpus case yields a positioned diagnostic", () => {
  for (const kase of invalidCases) {
    const { form, diagnostics } = parsePolicy(kase.source);
    assert.equal(form, null, kase.name);
    assert.ok(diagnostics.length >= 1, kase.name);
    const lineCount = kase.source.split("\n").length;
    for (const d of diagnostics) {
      assert.ok(d.line >= 1 && d.line <= Math.max(1, lineCount), `${kase.name}: line ${d.line}`);
      assert.ok(d.column >= 1, `${kase.name}: column ${d.column}`);
    }
  }
});

test("parses the reference policy into the expected field values", () => {
  const source = [
    'policy "gpu-default" {',
    "  applies to kind gpu;",
    '  tier "staff" advance 30d priority 1;',
    '  tier "student" advance 7d priority 2;',
    "  max_duration 8h;",
    "  reclaim if idle > 30m grace 15m;",
    "  on_contention auction deadline 2h;",
    "  owner may_reclaim always;",
    "}",
  ].join("\n");
  const { form, diagnostics } = parsePolicy(source);
  assert.equal(diagnostics.length, 0);
  assert.deepEqual(form, {
    name: "gpu-default",
    applies: { target: "kind", value: "gpu" },
    tiers: [
      { name: "staff", advanceMinutes: 43200, priority: 1 },
      { name: "student", advanceMinutes: 10080, priority: 2 },
    ],
    maxDurationMinutes: 480,
    maxActive: null,
    reclaim: { idleMinutes: 30, graceMinutes: 15 },
    contention: { mode: "auction", deadlineMinutes: 120 },
    ownerMayReclaim: true,
  });
  // the form editor emits this exact canonical text
  assert.equal(emitPolicy(form!), source + "\n");
});

test("emitted DSL always parses (generator restricted to the grammar)", () => {
  const tricky = defaultForm();
  tricky.name = 'quo"ted name';
  tricky.applies = { target: "resource", value: 'res "x"' };
  tricky.tiers = [
    { name: "night shift", advanceMinutes: 95, priority: 3 },
    { name: "α", advanceMinutes: 2 * 1440, priority: 1 },
  ];
  tricky.maxActive = 7;
  tricky.reclaim = { idleMinutes: 45, graceMinutes: 45 };
  tricky.contention = { mode: "auction", deadlineMinutes: 75 };
  tricky.ownerMayReclaim = false;
  const emitted = emitPolicy(tricky);
  const { form, diagnostics } = parsePolicy(emitted);
  assert.equal(diagnostics.length, 0, emitted);
  assert.deepEqual(form, tricky);
});

test("parser is total on noise", () => {
  let seed = 0xdecaf;
  const rand = () => {
    // xorshift, deterministic inputs
    seed ^= seed << 13;
    seed ^= seed >>> 17;
    seed ^= seed << 5;
    return (seed >>> 0) / 0xffffffff;
  };
  for (let i = 0; i < 5000; i++) {
    const length = Math.floor(rand() * 60);
    let text = "";
    for (let j = 0; j < length; j++) {
      text += String.fromCharCode(Math.floor(rand() * 300));
    }
    const { form, diagnostics } = parsePolicy(text);
    assert.ok(form !== null || diagnostics.length >= 1);
  }
});

test("formFromPolicyDoc mirrors the API document", () => {
  const form = formFromPolicyDoc({
    name: "wedge",
    applies_kind: null,
    applies_resource: "wedge-1",
    tiers: [{ name: "ops", advance_minutes: 4320, rank: 1 }],
    max_duration: 240,
    max_active: 1,
    reclaim_idle_after: 60,
    reclaim_grace: 10,
    contention_mode: "queue",
    auction_deadline: null,
    owner_reclaim: false,
  });
  const { form: reparsed, diagnostics } = parsePolicy(emitPolicy(form));
  assert.equal(diagnostics.length, 0);
  assert.deepEqual(reparsed, form);
});
