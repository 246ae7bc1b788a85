// Mirrors of the /v1 API documents. The client never derives business
// decisions from these; every admissibility answer comes from the server.

export interface ResourceDoc {
  id: string;
  kind: string;
  site: string;
  units: number;
  driver: string;
  attributes: Record<string, string>;
  owner: string;
  retired: boolean;
  enrolled_at: number;
}

export interface ReservationDoc {
  id: string;
  user: string;
  tier: string;
  resource: string;
  unit_count: number;
  units: number[];
  start: number;
  end: number;
  mode: string;
  state: string;
  created_at: number;
  truncated_at: number | null;
  bid: number | null;
  auction: string | null;
  batch_kind: string | null;
  batch_deadline: number | null;
}

export interface OfferDoc {
  id: string;
  resource: string;
  start: number;
  end: number;
  units: number[];
  user: string;
  tier: string;
  need_units: number;
  issued_at: number;
  ttl: number;
  state: string;
}

export interface BidDoc {
  user: string;
  amount: number;
  placed_at: number;
}

export interface AuctionDoc {
  id: string;
  resource: string;
  start: number;
  end: number;
  unit_count: number;
  deadline: number;
  opened_at: number;
  bids: BidDoc[];
  state: string;
  winner: string | null;
  winning_amount: number | null;
}

export interface LedgerEntryDoc {
  ts: number;
  user: string;
  delta: number;
  reason: string;
  ref: string;
}

export interface TokenAccountDoc {
  user: string;
  balance: number;
  entries: LedgerEntryDoc[];
}

export interface UsageReportDoc {
  subject: string;
  window: { start: number; end: number };
  busy_minutes: number;
  idle_minutes: number;
  dev_minutes: number;
  batch_minutes: number;
  unit_hours: number;
  energy_kwh: number;
}

export interface PolicyDoc {
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
  source?: string;
}

export interface EventDoc {
  seq: number;
  ts: number;
  kind: string;
  actor: string;
  payload: Record<string, unknown>;
}

export const GRAIN = 15;

export function minutesToIso(minutes: number): string {
  return new Date(minutes * 60_000).toISOString().slice(0, 16) + "Z";
}

export function isoToMinutes(text: string): number {
  return Math.floor(Date.parse(text) / 60_000);
}
