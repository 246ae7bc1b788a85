"""One-shot generator for policy_corpus.json (kept for reproducibility)."""

import json
from pathlib import Path

V, I = True, False
cases = [
    # --- valid (26) ---
    ("minimal-kind", V, 'policy "min" {\n  applies to kind gpu;\n}\n'),
    ("minimal-resource", V, 'policy "res" {\n  applies to resource "wedge-1";\n}\n'),
    ("full-featured", V, 'policy "gpu-default" {\n  applies to kind gpu;\n  tier "staff" advance 30d priority 1;\n  tier "student" advance 7d priority 2;\n  max_duration 8h;\n  reclaim if idle > 30m grace 15m;\n  on_contention auction deadline 2h;\n  owner may_reclaim always;\n}\n'),
    ("queue-contention", V, 'policy "q" {\n  applies to kind compute;\n  tier "all" advance 14d priority 1;\n  on_contention queue;\n}\n'),
    ("owner-never", V, 'policy "hands-off" {\n  applies to resource "a16-cluster";\n  tier "t" advance 2d;\n  owner may_reclaim never;\n}\n'),
    ("three-tiers", V, 'policy "tri" {\n  applies to kind gpu;\n  tier "gold" advance 60d priority 1;\n  tier "silver" advance 21d priority 2;\n  tier "bronze" advance 3d priority 3;\n}\n'),
    ("minutes-duration", V, 'policy "m" {\n  applies to kind smartnic;\n  tier "t" advance 90m;\n  max_duration 45m;\n}\n'),
    ("hours-duration", V, 'policy "h" {\n  applies to kind smartnic;\n  tier "t" advance 36h;\n  max_duration 12h;\n}\n'),
    ("days-duration", V, 'policy "d" {\n  applies to kind p4-switch;\n  tier "t" advance 5d;\n  max_duration 1d;\n}\n'),
    ("max-active", V, 'policy "cap" {\n  applies to kind gpu;\n  tier "t" advance 7d;\n  max_active 2;\n}\n'),
    ("comments-everywhere", V, '# leading comment\npolicy "c" { # after brace\n  # full-line comment\n  applies to kind gpu; # trailing\n  tier "t" advance 1d; # another\n} # end\n'),
    ("escaped-quote-name", V, 'policy "with \\"quotes\\"" {\n  applies to kind gpu;\n  tier "ti\\"er" advance 1d;\n}\n'),
    ("crlf-and-tabs", V, 'policy "ws" {\r\n\tapplies to kind gpu;\r\n\ttier "t" advance 1d;\r\n}\r\n'),
    ("one-line", V, 'policy "oneline" { applies to kind gpu; tier "t" advance 1d priority 5; max_duration 2h; }'),
    ("implicit-priorities", V, 'policy "impl" {\n  applies to kind gpu;\n  tier "first" advance 10d;\n  tier "second" advance 5d;\n  tier "third" advance 1d;\n}\n'),
    ("mixed-priorities", V, 'policy "mix" {\n  applies to kind gpu;\n  tier "auto" advance 10d;\n  tier "explicit" advance 5d priority 7;\n}\n'),
    ("big-advance", V, 'policy "big" {\n  applies to kind gpu;\n  tier "t" advance 365d;\n  max_duration 168h;\n}\n'),
    ("grain-boundary-duration", V, 'policy "grain" {\n  applies to kind gpu;\n  tier "t" advance 1d;\n  max_duration 15m;\n}\n'),
    ("grace-equals-idle", V, 'policy "edge" {\n  applies to kind gpu;\n  tier "t" advance 1d;\n  reclaim if idle > 30m grace 30m;\n}\n'),
    ("auction-short-deadline", V, 'policy "fast" {\n  applies to kind gpu;\n  tier "t" advance 1d;\n  on_contention auction deadline 15m;\n}\n'),
    ("hyphenated-kind", V, 'policy "p4" {\n  applies to kind p4-switch;\n  tier "net" advance 2d priority 1;\n  max_duration 4h;\n}\n'),
    ("statement-order-scrambled", V, 'policy "scramble" {\n  max_duration 6h;\n  owner may_reclaim never;\n  applies to kind gpu;\n  on_contention queue;\n  tier "t" advance 2d;\n}\n'),
    ("spaces-in-names", V, 'policy "Lab Policy 2026" {\n  applies to resource "l40s-cluster";\n  tier "night shift" advance 12h;\n}\n'),
    ("no-tiers", V, 'policy "locked" {\n  applies to resource "wedge-2";\n  max_duration 1h;\n}\n'),
    ("reclaim-only", V, 'policy "gc" {\n  applies to kind compute;\n  tier "t" advance 3d;\n  reclaim if idle > 2h grace 20m;\n}\n'),
    ("unicode-name", V, 'policy "laborat\u00f3rio-\u03b1" {\n  applies to kind gpu;\n  tier "\u03b2" advance 1d;\n}\n'),
    # --- invalid (24) ---
    ("empty", I, ""),
    ("whitespace-only", I, "   \n\t  \n"),
    ("comment-only", I, "# nothing to see here\n"),
    ("missing-policy-keyword", I, '"p" { applies to kind gpu; }'),
    ("missing-name", I, "policy { applies to kind gpu; }"),
    ("missing-open-brace", I, 'policy "p" applies to kind gpu;'),
    ("missing-close-brace", I, 'policy "p" { applies to kind gpu;'),
    ("unknown-statement", I, 'policy "p" { applies to kind gpu; frobnicate 3; }'),
    ("duplicate-tier-name", I, 'policy "p" {\n  applies to kind gpu;\n  tier "a" advance 1d;\n  tier "a" advance 2d;\n}\n'),
    ("duplicate-rank", I, 'policy "p" { applies to kind gpu; tier "a" advance 1d priority 1; tier "b" advance 2d priority 1; }'),
    ("bare-int-duration", I, 'policy "p" { applies to kind gpu; max_duration 8; }'),
    ("bad-duration-suffix", I, 'policy "p" { applies to kind gpu; max_duration 8w; }'),
    ("missing-semicolon", I, 'policy "p" { applies to kind gpu max_duration 2h; }'),
    ("unterminated-string", I, 'policy "p { applies to kind gpu; }'),
    ("garbage-after-close", I, 'policy "p" { applies to kind gpu; } trailing junk'),
    ("missing-applies", I, 'policy "p" { max_duration 2h; }'),
    ("grace-exceeds-idle", I, 'policy "p" { applies to kind gpu; reclaim if idle > 15m grace 30m; }'),
    ("max-duration-under-grain", I, 'policy "p" { applies to kind gpu; max_duration 10m; }'),
    ("max-active-zero", I, 'policy "p" { applies to kind gpu; max_active 0; }'),
    ("zero-advance", I, 'policy "p" { applies to kind gpu; tier "t" advance 0h; }'),
    ("duplicate-applies", I, 'policy "p" { applies to kind gpu; applies to kind compute; }'),
    ("auction-missing-deadline", I, 'policy "p" { applies to kind gpu; on_contention auction; }'),
    ("owner-bad-mode", I, 'policy "p" { applies to kind gpu; owner may_reclaim sometimes; }'),
    ("binary-noise", I, "policy " + chr(0) + chr(1) + chr(2) + " {{{{ ;;; " + chr(255)),
]

docs = [{"name": n, "valid": v, "source": s} for n, v, s in cases]
assert len(docs) == 50, len(docs)
assert sum(1 for d in docs if d["valid"]) == 26

out = Path(__file__).parent / "policy_corpus.json"
out.write_text(json.dumps({"cases": docs}, indent=2, ensure_ascii=False), encoding="utf-8")
print(f"wrote {len(docs)} cases to {out}")
