// Thin fetch client for the /v1 API. One method per endpoint the UI uses;
// errors surface as ApiError with the server's machine-readable code.

import {
  AuctionDoc,
  EventDoc,
  OfferDoc,
  PolicyDoc,
  ReservationDoc,
  ResourceDoc,
  TokenAccountDoc,
  UsageReportDoc,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
    public readonly details: unknown = null,
  ) {
    super(message);
  }
}

export interface ClientConfig {
  baseUrl: string;
  token: string;
}

export class ApiClient {
  constructor(public config: ClientConfig) {}

  private async call<T>(
    method: string,
    path: string,
    body?: unknown,
    idempotencyKey?: string,
  ): Promise<T> {
    const headers: Record<string, string> = {
      Authorization: `Bearer ${this.config.token}`,
    };
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (idempotencyKey) headers["Idempotency-Key"] = idempotencyKey;
    const response = await fetch(this.config.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    let doc: Record<string, unknown> = {};
    try {
      doc = (await response.json()) as Record<string, unknown>;
    } catch {
      // fall through with an empty doc
    }
    if (!response.ok) {
      const error = (doc.error ?? {}) as { code?: string; message?: string; details?: unknown };
      throw new ApiError(
        response.status,
        error.code ?? String(response.status),
        error.message ?? response.statusText,
        error.details,
      );
    }
    return doc as T;
  }

  resources(params: { kind?: string; site?: string } = {}): Promise<{ resources: ResourceDoc[] }> {
    const qs = new URLSearchParams(params as Record<string, string>).toString();
    return this.call("GET", `/v1/resources${qs ? "?" + qs : ""}`);
  }

  reservations(params: { user?: string; resource?: string; state?: string } = {}):
    Promise<{ reservations: ReservationDoc[] }> {
    const qs = new URLSearchParams(params as Record<string, string>).toString();
    return this.call("GET", `/v1/reservations${qs ? "?" + qs : ""}`);
  }

  reservation(id: string): Promise<ReservationDoc> {
    return this.call("GET", `/v1/reservations/${encodeURIComponent(id)}`);
  }

  reserve(body: {
    resource: string;
    unit_count: number;
    start: number;
    end: number;
    mode?: string;
    bid?: number;
  }): Promise<ReservationDoc & { seq: number }> {
    return this.call("POST", "/v1/reservations", body, crypto.randomUUID());
  }

  cancel(id: string): Promise<ReservationDoc> {
    return this.call("DELETE", `/v1/reservations/${encodeURIComponent(id)}`);
  }

  release(id: string, at?: number): Promise<{ reservation: ReservationDoc; freed: number[] | null }> {
    return this.call("POST", `/v1/reservations/${encodeURIComponent(id)}/release`,
      at === undefined ? {} : { at });
  }

  batch(body: { kind: string; unit_count: number; duration: number; deadline?: number }):
    Promise<ReservationDoc & { seq: number }> {
    return this.call("POST", "/v1/batch", body, crypto.randomUUID());
  }

  availability(resource: string, from: number, to: number):
    Promise<{ resource: string; units: Record<string, [number, number][]> }> {
    return this.call("GET", `/v1/availability?resource=${encodeURIComponent(resource)}&from=${from}&to=${to}`);
  }

  offers(params: { user?: string; state?: string } = {}): Promise<{ offers: OfferDoc[] }> {
    const qs = new URLSearchParams(params as Record<string, string>).toString();
    return this.call("GET", `/v1/offers${qs ? "?" + qs : ""}`);
  }

  acceptOffer(id: string): Promise<ReservationDoc & { seq: number }> {
    return this.call("POST", `/v1/offers/${encodeURIComponent(id)}/accept`, {});
  }

  auctions(state?: string): Promise<{ auctions: AuctionDoc[] }> {
    return this.call("GET", `/v1/auctions${state ? "?state=" + state : ""}`);
  }

  bid(auctionId: string, amount: number): Promise<{ user: string; amount: number }> {
    return this.call("POST", `/v1/auctions/${encodeURIComponent(auctionId)}/bids`, { amount });
  }

  tokens(user: string): Promise<TokenAccountDoc> {
    return this.call("GET", `/v1/accounts/${encodeURIComponent(user)}/tokens`);
  }

  usageReport(subject: string, from: number, to: number): Promise<UsageReportDoc> {
    return this.call("GET", `/v1/reports/usage?subject=${encodeURIComponent(subject)}&from=${from}&to=${to}`);
  }

  policies(): Promise<{ policies: PolicyDoc[] }> {
    return this.call("GET", "/v1/policies");
  }

  installPolicy(source: string): Promise<{ policy: PolicyDoc; source: string }> {
    return this.call("POST", "/v1/policies", { source });
  }

  events(since: number): Promise<{ events: EventDoc[]; head: number }> {
    return this.call("GET", `/v1/events?since=${since}`);
  }
}
