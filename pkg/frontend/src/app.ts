// Single-page client. All state transitions are driven by API responses:
// every mutation re-fetches, nothing is applied optimistically, and the
// event poll re-renders the active view whenever the server head advances.

import { ApiClient, ApiError } from "./api.js";
import {
  defaultForm,
  emitPolicy,
  formFromPolicyDoc,
  parsePolicy,
  PolicyForm,
} from "./dsl.js";
import { buildGrid, cellWindow, GridModel } from "./grid.js";
import { startEventLoop } from "./poll.js";
import { GRAIN, minutesToIso, isoToMinutes, ResourceDoc } from "./types.js";

type ViewName =
  | "calendar"
  | "reservations"
  | "offers"
  | "auctions"
  | "tokens"
  | "policies"
  | "dashboard";

interface AppState {
  client: ApiClient;
  user: string;
  view: ViewName;
  resource: string | null;
  dayStart: number; // minutes, aligned to a day
  policyForm: PolicyForm;
  policySourceDirty: string | null; // raw text being edited, if the user typed
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

function fmtWindow(start: number, end: number): string {
  return `${minutesToIso(start)} → ${minutesToIso(end)}`;
}

function todayStart(): number {
  const now = Math.floor(Date.now() / 60_000);
  return now - (now % 1440);
}

async function guard<T>(root: HTMLElement, work: () => Promise<T>): Promise<T | null> {
  try {
    return await work();
  } catch (error) {
    const message =
      error instanceof ApiError ? `${error.code}: ${error.message}` : String(error);
    root.prepend(el("div", { class: "error" }, message));
    return null;
  }
}

// ---------------------------------------------------------------------------
// Views
// ---------------------------------------------------------------------------

async function renderCalendar(state: AppState, root: HTMLElement): Promise<void> {
  const { client } = state;
  const data = await guard(root, () => client.resources());
  if (!data) return;
  const resources = data.resources.filter((r) => !r.retired);
  if (resources.length === 0) {
    root.append(el("p", {}, "No resources enrolled."));
    return;
  }
  if (!state.resource || !resources.some((r) => r.id === state.resource)) {
    state.resource = resources[0]!.id;
  }
  const resource = resources.find((r) => r.id === state.resource)!;

  const picker = el("div", { class: "toolbar" });
  const select = el("select", {});
  for (const r of resources) {
    const opt = el("option", { value: r.id }, `${r.id} (${r.kind}, ${r.units}u, ${r.site})`);
    if (r.id === resource.id) opt.selected = true;
    select.append(opt);
  }
  select.onchange = () => {
    state.resource = select.value;
    void rerender(state);
  };
  const prev = el("button", {}, "◀ day");
  const next = el("button", {}, "day ▶");
  prev.onclick = () => {
    state.dayStart -= 1440;
    void rerender(state);
  };
  next.onclick = () => {
    state.dayStart += 1440;
    void rerender(state);
  };
  picker.append(select, prev, el("span", {}, minutesToIso(state.dayStart).slice(0, 10)), next);
  root.append(picker);

  const windowStart = state.dayStart;
  const windowEnd = windowStart + 1440;
  const [rsvs, offers] = await Promise.all([
    client.reservations({ resource: resource.id }),
    client.offers({ state: "open" }),
  ]);
  const grid = buildGrid(
    resource.id,
    resource.units,
    windowStart,
    windowEnd,
    rsvs.reservations,
    offers.offers,
  );
  root.append(renderGridTable(state, root, resource, grid));
  root.append(
    el(
      "p",
      { class: "hint" },
      "cells are 15-minute slots — click a free cell to book from there",
    ),
  );
}

function renderGridTable(
  state: AppState,
  root: HTMLElement,
  resource: ResourceDoc,
  grid: GridModel,
): HTMLElement {
  const table = el("table", { class: "grid" });
  const header = el("tr", {}, el("th", {}, "unit"));
  for (let slot = 0; slot < grid.slots; slot += 4) {
    header.append(el("th", { colspan: "4" }, minutesToIso(grid.windowStart + slot * GRAIN).slice(11, 16)));
  }
  table.append(header);
  grid.cells.forEach((row, unit) => {
    const tr = el("tr", {}, el("th", {}, `#${unit}`));
    row.forEach((cell, slot) => {
      const td = el("td", { class: `cell ${cell.state}`, title: cell.reservation ?? cell.offer ?? "" });
      if (cell.state === "free") {
        td.onclick = () => {
          const [start, end] = cellWindow(grid, slot);
          openBookingForm(state, root, resource, start, end);
        };
      }
      tr.append(td);
    });
    table.append(tr);
  });
  return table;
}

function openBookingForm(
  state: AppState,
  root: HTMLElement,
  resource: ResourceDoc,
  start: number,
  end: number,
): void {
  document.querySelector(".booking-form")?.remove();
  const form = el("div", { class: "booking-form panel" });
  const startInput = el("input", { value: minutesToIso(start), size: "18" });
  const endInput = el("input", { value: minutesToIso(end), size: "18" });
  const unitsInput = el("input", { value: "1", size: "3" });
  const submit = el("button", {}, `book ${resource.id}`);
  submit.onclick = () => {
    void guard(root, async () => {
      const result = await state.client.reserve({
        resource: resource.id,
        unit_count: parseInt(unitsInput.value, 10),
        start: isoToMinutes(startInput.value),
        end: isoToMinutes(endInput.value),
      });
      form.replaceChildren(el("span", {}, `${result.id}: ${result.state}`));
      setTimeout(() => void rerender(state), 400);
      return result;
    });
  };
  form.append(
    el("label", {}, "from ", startInput),
    el("label", {}, " to ", endInput),
    el("label", {}, " units ", unitsInput),
    submit,
  );
  root.append(form);
}

async function renderReservations(state: AppState, root: HTMLElement): Promise<void> {
  const data = await guard(root, () => state.client.reservations({ user: state.user }));
  if (!data) return;
  const table = el(
    "table",
    { class: "rows" },
    el(
      "tr",
      {},
      ...["id", "resource", "units", "window", "mode", "state", ""].map((h) => el("th", {}, h)),
    ),
  );
  for (const rsv of data.reservations.slice().reverse()) {
    const actions = el("td", {});
    if (rsv.state === "queued" || rsv.state === "confirmed") {
      const btn = el("button", {}, "cancel");
      btn.onclick = () => {
        void guard(root, () => state.client.cancel(rsv.id)).then(() => rerender(state));
      };
      actions.append(btn);
    }
    if (rsv.state === "active") {
      const btn = el("button", {}, "release now");
      btn.onclick = () => {
        void guard(root, () => state.client.release(rsv.id)).then(() => rerender(state));
      };
      actions.append(btn);
    }
    table.append(
      el(
        "tr",
        { class: rsv.state },
        el("td", {}, rsv.id),
        el("td", {}, rsv.resource || `(${rsv.batch_kind ?? "batch"})`),
        el("td", {}, rsv.units.join(",") || "-"),
        el("td", {}, fmtWindow(rsv.start, rsv.truncated_at ?? rsv.end)),
        el("td", {}, rsv.mode),
        el("td", {}, rsv.state),
        actions,
      ),
    );
  }
  root.append(table);
}

async function renderOffers(state: AppState, root: HTMLElement): Promise<void> {
  const data = await guard(root, () => state.client.offers({ user: state.user }));
  if (!data) return;
  if (data.offers.length === 0) {
    root.append(el("p", {}, "No offers for you right now. Freed capacity shows up here."));
    return;
  }
  for (const offer of data.offers.slice().reverse()) {
    const row = el(
      "div",
      { class: `offer panel ${offer.state}` },
      el("b", {}, offer.id),
      el("span", {}, ` ${offer.resource} units ${offer.units.join(",")} ${fmtWindow(offer.start, offer.end)} `),
      el("span", { class: "state" }, offer.state),
    );
    if (offer.state === "open") {
      const accept = el("button", {}, "accept");
      accept.onclick = () => {
        void guard(root, async () => {
          const rsv = await state.client.acceptOffer(offer.id);
          state.view = "reservations";
          await rerender(state);
          return rsv;
        }).then((result) => {
          if (result === null) void rerender(state); // 409 etc: refresh the feed
        });
      };
      row.append(accept);
    }
    root.append(row);
  }
}

async function renderAuctions(state: AppState, root: HTMLElement): Promise<void> {
  const data = await guard(root, () => state.client.auctions());
  if (!data) return;
  if (data.auctions.length === 0) {
    root.append(el("p", {}, "No auctions. Contested windows under auction policies open one."));
    return;
  }
  for (const auction of data.auctions.slice().reverse()) {
    const panel = el(
      "div",
      { class: "panel" },
      el("b", {}, auction.id),
      el(
        "span",
        {},
        ` ${auction.resource} ${fmtWindow(auction.start, auction.end)} — ${auction.state}` +
          (auction.winner ? ` (winner ${auction.winner} @ ${auction.winning_amount})` : "") +
          ` — ${auction.bids.length} bid(s)`,
      ),
    );
    if (auction.state === "open") {
      const amount = el("input", { size: "5", placeholder: "tokens" });
      const place = el("button", {}, "bid");
      place.onclick = () => {
        void guard(root, () => state.client.bid(auction.id, parseInt(amount.value, 10)))
          .then(() => rerender(state));
      };
      panel.append(amount, place);
    }
    root.append(panel);
  }
}

async function renderTokens(state: AppState, root: HTMLElement): Promise<void> {
  const data = await guard(root, () => state.client.tokens(state.user));
  if (!data) return;
  root.append(el("h3", {}, `balance: ${data.balance} tokens`));
  const table = el(
    "table",
    { class: "rows" },
    el("tr", {}, ...["when", "delta", "reason", "ref"].map((h) => el("th", {}, h))),
  );
  for (const entry of data.entries.slice().reverse().slice(0, 50)) {
    table.append(
      el(
        "tr",
        {},
        el("td", {}, minutesToIso(entry.ts)),
        el("td", { class: entry.delta < 0 ? "neg" : "pos" }, String(entry.delta)),
        el("td", {}, entry.reason),
        el("td", {}, entry.ref),
      ),
    );
  }
  root.append(table);
}

function renderPolicyEditor(state: AppState, root: HTMLElement): void {
  const container = el("div", { class: "editor" });
  const formSide = el("div", { class: "panel" });
  const textSide = el("div", { class: "panel" });
  const diagBox = el("div", { class: "diagnostics" });

  const source = state.policySourceDirty ?? emitPolicy(state.policyForm);
  const textarea = el("textarea", { rows: "16", cols: "60" });
  textarea.value = source;

  const syncFromForm = () => {
    state.policySourceDirty = null;
    textarea.value = emitPolicy(state.policyForm);
    diagBox.replaceChildren();
  };

  // form side: structured fields generating DSL text live
  const nameInput = el("input", { value: state.policyForm.name });
  nameInput.oninput = () => {
    state.policyForm.name = nameInput.value;
    syncFromForm();
  };
  const targetSel = el("select", {});
  targetSel.append(el("option", { value: "kind" }, "kind"), el("option", { value: "resource" }, "resource"));
  targetSel.value = state.policyForm.applies.target;
  const targetValue = el("input", { value: state.policyForm.applies.value });
  const applyTarget = () => {
    state.policyForm.applies = {
      target: targetSel.value as "kind" | "resource",
      value: targetValue.value,
    };
    syncFromForm();
  };
  targetSel.onchange = applyTarget;
  targetValue.oninput = applyTarget;

  const tiersBox = el("div", {});
  const redrawTiers = () => {
    tiersBox.replaceChildren();
    state.policyForm.tiers.forEach((tier, index) => {
      const name = el("input", { value: tier.name, size: "10" });
      const advance = el("input", { value: String(tier.advanceMinutes), size: "7", title: "minutes" });
      const priority = el("input", { value: String(tier.priority), size: "3" });
      const drop = el("button", {}, "✕");
      name.oninput = () => {
        tier.name = name.value;
        syncFromForm();
      };
      advance.oninput = () => {
        tier.advanceMinutes = parseInt(advance.value, 10) || 0;
        syncFromForm();
      };
      priority.oninput = () => {
        tier.priority = parseInt(priority.value, 10) || 0;
        syncFromForm();
      };
      drop.onclick = () => {
        state.policyForm.tiers.splice(index, 1);
        redrawTiers();
        syncFromForm();
      };
      tiersBox.append(
        el("div", {}, "tier ", name, " advance(min) ", advance, " priority ", priority, drop),
      );
    });
  };
  redrawTiers();
  const addTier = el("button", {}, "+ tier");
  addTier.onclick = () => {
    state.policyForm.tiers.push({
      name: `tier-${state.policyForm.tiers.length + 1}`,
      advanceMinutes: 1440,
      priority: state.policyForm.tiers.length + 1,
    });
    redrawTiers();
    syncFromForm();
  };

  const maxDur = el("input", { value: String(state.policyForm.maxDurationMinutes), size: "7" });
  maxDur.oninput = () => {
    state.policyForm.maxDurationMinutes = parseInt(maxDur.value, 10) || 0;
    syncFromForm();
  };
  const maxActive = el("input", { value: state.policyForm.maxActive?.toString() ?? "", size: "4" });
  maxActive.oninput = () => {
    state.policyForm.maxActive = maxActive.value ? parseInt(maxActive.value, 10) : null;
    syncFromForm();
  };
  const contentionSel = el("select", {});
  contentionSel.append(el("option", { value: "queue" }, "queue"), el("option", { value: "auction" }, "auction"));
  contentionSel.value = state.policyForm.contention.mode;
  const deadline = el("input", {
    value: state.policyForm.contention.mode === "auction"
      ? String(state.policyForm.contention.deadlineMinutes)
      : "120",
    size: "5",
  });
  const applyContention = () => {
    state.policyForm.contention =
      contentionSel.value === "auction"
        ? { mode: "auction", deadlineMinutes: parseInt(deadline.value, 10) || 0 }
        : { mode: "queue" };
    syncFromForm();
  };
  contentionSel.onchange = applyContention;
  deadline.oninput = applyContention;
  const ownerChk = el("input", { type: "checkbox" });
  ownerChk.checked = state.policyForm.ownerMayReclaim;
  ownerChk.onchange = () => {
    state.policyForm.ownerMayReclaim = ownerChk.checked;
    syncFromForm();
  };

  formSide.append(
    el("div", {}, "name ", nameInput),
    el("div", {}, "applies to ", targetSel, targetValue),
    tiersBox,
    addTier,
    el("div", {}, "max_duration(min) ", maxDur, " max_active ", maxActive),
    el("div", {}, "on_contention ", contentionSel, " deadline(min) ", deadline),
    el("label", {}, "owner may_reclaim ", ownerChk),
  );

  // text side: the DSL is the source of truth at submit time
  textarea.oninput = () => {
    state.policySourceDirty = textarea.value;
    const { form, diagnostics } = parsePolicy(textarea.value);
    diagBox.replaceChildren(
      ...diagnostics.map((d) => el("div", { class: "error" }, `${d.line}:${d.column}: ${d.message}`)),
    );
    if (form !== null) state.policyForm = form;
  };

  const submit = el("button", {}, "install policy");
  submit.onclick = () => {
    void guard(root, async () => {
      const result = await state.client.installPolicy(textarea.value);
      diagBox.replaceChildren(el("div", { class: "ok" }, `installed ${result.policy.name}`));
      return result;
    }).then((result) => {
      if (result === null) return;
    });
  };

  const loadExisting = el("select", {});
  loadExisting.append(el("option", { value: "" }, "load existing…"));
  void state.client.policies().then(({ policies }) => {
    for (const pol of policies) loadExisting.append(el("option", { value: pol.name }, pol.name));
    loadExisting.onchange = () => {
      const doc = policies.find((p) => p.name === loadExisting.value);
      if (doc) {
        state.policyForm = formFromPolicyDoc(doc);
        state.policySourceDirty = null;
        void rerender(state);
      }
    };
  });

  textSide.append(textarea, diagBox, el("div", {}, submit, loadExisting));
  container.append(formSide, textSide);
  root.append(container);
}

async function renderDashboard(state: AppState, root: HTMLElement): Promise<void> {
  const subject = el("input", { value: state.user, size: "14" });
  const from = el("input", { value: minutesToIso(state.dayStart - 7 * 1440), size: "18" });
  const to = el("input", { value: minutesToIso(state.dayStart + 1440), size: "18" });
  const go = el("button", {}, "report");
  const out = el("div", {});
  go.onclick = () => {
    void guard(root, async () => {
      const report = await state.client.usageReport(
        subject.value,
        isoToMinutes(from.value),
        isoToMinutes(to.value),
      );
      out.replaceChildren();
      const covered = report.busy_minutes + report.idle_minutes;
      if (covered === 0) {
        out.append(el("p", {}, "No held reservations in this window."));
        return report;
      }
      const bars: [string, number][] = [
        ["busy", report.busy_minutes],
        ["dev", report.dev_minutes],
        ["batch", report.batch_minutes],
        ["idle", report.idle_minutes],
      ];
      for (const [label, minutes] of bars) {
        const pct = Math.round((100 * minutes) / covered);
        out.append(
          el(
            "div",
            { class: "bar-row" },
            el("span", { class: "bar-label" }, `${label} ${minutes}m`),
            el("div", { class: `bar ${label}`, style: `width:${pct}%` }),
          ),
        );
      }
      out.append(
        el("p", {}, `unit-hours ${report.unit_hours.toFixed(2)} — energy ${report.energy_kwh.toFixed(3)} kWh`),
      );
      return report;
    });
  };
  root.append(el("div", { class: "toolbar" }, "subject ", subject, " from ", from, " to ", to, go), out);
}

// ---------------------------------------------------------------------------
// Shell
// ---------------------------------------------------------------------------

const VIEWS: Record<ViewName, (state: AppState, root: HTMLElement) => void | Promise<void>> = {
  calendar: renderCalendar,
  reservations: renderReservations,
  offers: renderOffers,
  auctions: renderAuctions,
  tokens: renderTokens,
  policies: (state, root) => renderPolicyEditor(state, root),
  dashboard: renderDashboard,
};

let appState: AppState | null = null;

async function rerender(state: AppState): Promise<void> {
  const root = document.getElementById("view");
  if (!root) return;
  root.replaceChildren();
  document.querySelectorAll("nav button").forEach((btn) => {
    btn.classList.toggle("active", (btn as HTMLButtonElement).dataset.view === state.view);
  });
  await VIEWS[state.view](state, root);
}

export function boot(): void {
  const saved = JSON.parse(localStorage.getItem("shary-ui") ?? "{}") as Partial<{
    url: string;
    token: string;
    user: string;
  }>;
  const url = el("input", { value: saved.url ?? "http://127.0.0.1:8080", size: "24" });
  const token = el("input", { value: saved.token ?? "", size: "16", placeholder: "bearer token" });
  const user = el("input", { value: saved.user ?? "", size: "10", placeholder: "user id" });

  const state: AppState = {
    client: new ApiClient({ baseUrl: url.value, token: token.value }),
    user: user.value,
    view: "calendar",
    resource: null,
    dayStart: todayStart(),
    policyForm: defaultForm(),
    policySourceDirty: null,
  };
  appState = state;

  const applySettings = () => {
    state.client = new ApiClient({ baseUrl: url.value.replace(/\/$/, ""), token: token.value });
    state.user = user.value;
    localStorage.setItem(
      "shary-ui",
      JSON.stringify({ url: url.value, token: token.value, user: user.value }),
    );
    void rerender(state);
  };
  url.onchange = applySettings;
  token.onchange = applySettings;
  user.onchange = applySettings;

  const nav = el("nav", {});
  const labels: [ViewName, string][] = [
    ["calendar", "Calendar"],
    ["reservations", "My reservations"],
    ["offers", "Offers"],
    ["auctions", "Auctions"],
    ["tokens", "Tokens"],
    ["policies", "Policies"],
    ["dashboard", "Dashboard"],
  ];
  for (const [view, label] of labels) {
    const btn = el("button", { "data-view": view }, label);
    btn.onclick = () => {
      state.view = view;
      void rerender(state);
    };
    nav.append(btn);
  }

  const header = el(
    "header",
    {},
    el("h1", {}, "shary"),
    nav,
    el("div", { class: "settings" }, "api ", url, " token ", token, " user ", user),
  );
  document.body.prepend(header);

  startEventLoop(state.client, () => {
    if (appState) void rerender(appState);
  });
  void rerender(state);
}

if (typeof document !== "undefined" && document.getElementById("view")) {
  boot();
}
