// Calendar grid model: pure presentation of server documents.
// Cells are 15-minute slots per unit; a cell is occupied exactly when a
// confirmed/active reservation covers it, and "offered" when an open offer
// covers an otherwise-free cell.

import { GRAIN, OfferDoc, ReservationDoc } from "./types.js";

export type CellState = "free" | "confirmed" | "active" | "offered";

export interface GridCell {
  state: CellState;
  reservation: string | null;
  offer: string | null;
}

export interface GridModel {
  resource: string;
  windowStart: number;
  windowEnd: number;
  slots: number;
  // cells[unit][slot]
  cells: GridCell[][];
}

function effectiveEnd(rsv: ReservationDoc): number {
  return rsv.truncated_at !== null && rsv.truncated_at !== undefined
    ? rsv.truncated_at
    : rsv.end;
}

export function buildGrid(
  resource: string,
  units: number,
  windowStart: number,
  windowEnd: number,
  reservations: ReservationDoc[],
  offers: OfferDoc[] = [],
): GridModel {
  if (windowEnd <= windowStart || windowStart % GRAIN !== 0 || windowEnd % GRAIN !== 0) {
    throw new Error("grid window must be a non-empty multiple of the 15-minute grain");
  }
  const slots = (windowEnd - windowStart) / GRAIN;
  const cells: GridCell[][] = [];
  for (let unit = 0; unit < units; unit++) {
    const row: GridCell[] = [];
    for (let slot = 0; slot < slots; slot++) {
      row.push({ state: "free", reservation: null, offer: null });
    }
    cells.push(row);
  }

  for (const rsv of reservations) {
    if (rsv.resource !== resource) continue;
    if (rsv.state !== "confirmed" && rsv.state !== "active") continue;
    const from = Math.max(rsv.start, windowStart);
    const to = Math.min(effectiveEnd(rsv), windowEnd);
    for (const unit of rsv.units) {
      if (unit < 0 || unit >= units) continue;
      for (let t = from; t < to; t += GRAIN) {
        const slot = (t - windowStart) / GRAIN;
        const cell = cells[unit]![slot]!;
        cell.state = rsv.state as CellState;
        cell.reservation = rsv.id;
      }
    }
  }

  for (const offer of offers) {
    if (offer.resource !== resource || offer.state !== "open") continue;
    const from = Math.max(offer.start, windowStart);
    const to = Math.min(offer.end, windowEnd);
    for (const unit of offer.units) {
      if (unit < 0 || unit >= units) continue;
      for (let t = from; t < to; t += GRAIN) {
        const slot = (t - windowStart) / GRAIN;
        const cell = cells[unit]![slot]!;
        if (cell.state === "free") {
          cell.state = "offered";
          cell.offer = offer.id;
        }
      }
    }
  }

  return { resource, windowStart, windowEnd, slots, cells };
}

export function occupiedCellCount(grid: GridModel): number {
  let count = 0;
  for (const row of grid.cells) {
    for (const cell of row) {
      if (cell.state === "confirmed" || cell.state === "active") count += 1;
    }
  }
  return count;
}

export function offeredCellCount(grid: GridModel): number {
  let count = 0;
  for (const row of grid.cells) {
    for (const cell of row) {
      if (cell.state === "offered") count += 1;
    }
  }
  return count;
}

/** The [start, end) minute window a clicked free cell proposes to book. */
export function cellWindow(grid: GridModel, slot: number, slots = 4): [number, number] {
  const start = grid.windowStart + slot * GRAIN;
  return [start, Math.min(start + slots * GRAIN, grid.windowEnd)];
}
