"""HTTP+JSON API under /v1.

Authentication is a static bearer-token table mapping token -> (user, tier,
admin flag). Every mutating request becomes one command on the serialized
stream and the response carries the resulting event sequence number.
Clients may send an Idempotency-Key header to make retries safe.
"""

from __future__ import annotations

import json

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .core import Core
from .errors import CommandError
from .scheduler import availability, find_conflicts
from .telemetry import usage_report

_NOT_FOUND = {
    "unknown-resource",
    "unknown-id",
    "unknown-offer",
    "unknown-auction",
    "unknown-notification",
    "unknown-subject",
    "unknown-driver",
    "unknown-command",
    "unknown-instance",
    "unknown-remote",
    "unknown-project",
    "unknown-profile",
    "unknown-policy",
}
_CONFLICT = {
    "duplicate-id",
    "invalid-state",
    "already-settled",
    "already-compensated",
    "offer-unavailable",
    "offer-expired",
    "auction-closed",
    "not-yet-deadline",
    "unit-already-attached",
    "duplicate-instance",
    "duplicate-remote",
    "duplicate-project",
    "duplicate-profile",
    "project-not-empty",
    "not-attached",
    "retired-resource",
    "ambiguous-policy",
}
_FORBIDDEN = {"forbidden-actor", "owner-reclaim-denied", "no-grant"}
_UNAVAILABLE = {"driver-unreachable"}


def _status_for(code: str) -> int:
    if code in _NOT_FOUND:
        return 404
    if code in _CONFLICT:
        return 409
    if code in _FORBIDDEN:
        return 403
    if code in _UNAVAILABLE:
        return 503
    return 422


def _error_response(exc: CommandError) -> JSONResponse:
    return JSONResponse(status_code=_status_for(exc.code), content={"error": exc.to_doc()})


def create_app(core: Core, tokens: dict[str, dict]) -> FastAPI:
    app = FastAPI(title="shary", version="0.1.0", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.core = core

    def auth(request: Request) -> dict:
        header = request.headers.get("authorization", "")
        if not header.lower().startswith("bearer "):
            raise CommandError("unauthorized", "missing bearer token")
        account = tokens.get(header[7:].strip())
        if account is None:
            raise CommandError("unauthorized", "unknown token")
        return account

    @app.exception_handler(CommandError)
    async def on_command_error(request: Request, exc: CommandError):  # noqa: ARG001
        if exc.code == "unauthorized":
            return JSONResponse(status_code=401, content={"error": exc.to_doc()})
        return _error_response(exc)

    async def body_of(request: Request) -> dict:
        raw = await request.body()
        if not raw:
            return {}
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError:
            raise CommandError("invalid-body", "request body must be JSON") from None
        if not isinstance(doc, dict):
            raise CommandError("invalid-body", "request body must be a JSON object")
        return doc

    def run(request: Request, account: dict, kind: str, payload: dict, status: int = 200):
        key = request.headers.get("idempotency-key")
        if key is not None:
            payload = {**payload, "idempotency_key": f"{account['user']}:{key}"}
        result, seq = core.execute(kind, payload, actor=account["user"])
        if isinstance(result, dict) and result.get("rejected"):
            error = result["error"]
            return JSONResponse(
                status_code=_status_for(error["code"]), content={"error": error, "seq": seq}
            )
        return JSONResponse(status_code=status, content={**result, "seq": seq})

    def int_param(request: Request, name: str, default: int | None = None) -> int:
        raw = request.query_params.get(name)
        if raw is None:
            if default is None:
                raise CommandError("invalid-query", f"query parameter {name!r} is required")
            return default
        try:
            return int(raw)
        except ValueError:
            raise CommandError("invalid-query", f"{name} must be an integer") from None

    # -- resources -----------------------------------------------------------
    @app.post("/v1/resources")
    async def post_resource(request: Request):
        account = auth(request)
        if not account.get("admin"):
            raise CommandError("forbidden-actor", "resource enrollment requires admin")
        doc = await body_of(request)
        return run(request, account, "resource.register", {"descriptor": doc}, status=201)

    @app.get("/v1/resources")
    async def get_resources(request: Request):
        auth(request)
        from .catalog import list_resources

        rows = list_resources(
            core.store,
            kind=request.query_params.get("kind"),
            site=request.query_params.get("site"),
            owner=request.query_params.get("owner"),
        )
        return {"resources": [r.to_doc() for r in rows]}

    @app.delete("/v1/resources/{resource_id}")
    async def delete_resource(request: Request, resource_id: str):
        account = auth(request)
        if not account.get("admin"):
            raise CommandError("forbidden-actor", "decommission requires admin")
        return run(request, account, "resource.decommission", {"id": resource_id})

    # -- reservations ----------------------------------------------------------
    @app.post("/v1/reservations")
    async def post_reservation(request: Request):
        account = auth(request)
        doc = await body_of(request)
        payload = {
            "user": account["user"],
            "tier": account.get("tier", "default"),
            "resource": doc.get("resource", ""),
            "unit_count": doc.get("unit_count", 1),
            "start": doc.get("start"),
            "end": doc.get("end"),
            "mode": doc.get("mode", "interactive"),
            "bid": doc.get("bid"),
        }
        return run(request, account, "reservation.request", payload, status=201)

    @app.get("/v1/reservations")
    async def get_reservations(request: Request):
        auth(request)
        user = request.query_params.get("user")
        resource = request.query_params.get("resource")
        state = request.query_params.get("state")
        rows = [
            r.to_doc()
            for r in core.store.reservations.values()
            if (user is None or r.user == user)
            and (resource is None or r.resource == resource)
            and (state is None or r.state == state)
        ]
        return {"reservations": rows}

    @app.get("/v1/reservations/{rsv_id}")
    async def get_reservation(request: Request, rsv_id: str):
        auth(request)
        rsv = core.store.reservations.get(rsv_id)
        if rsv is None:
            raise CommandError("unknown-id", f"no reservation {rsv_id!r}")
        return rsv.to_doc()

    @app.delete("/v1/reservations/{rsv_id}")
    async def delete_reservation(request: Request, rsv_id: str):
        account = auth(request)
        payload = {"id": rsv_id, "admin": bool(account.get("admin"))}
        return run(request, account, "reservation.cancel", payload)

    @app.post("/v1/reservations/{rsv_id}/release")
    async def release_reservation(request: Request, rsv_id: str):
        account = auth(request)
        doc = await body_of(request)
        payload = {
            "id": rsv_id,
            "at": doc.get("at", core.clock.now()),
            "admin": bool(account.get("admin")),
        }
        return run(request, account, "reservation.release", payload)

    @app.get("/v1/availability")
    async def get_availability(request: Request):
        auth(request)
        resource = request.query_params.get("resource", "")
        start = int_param(request, "from")
        end = int_param(request, "to")
        with core.lock:
            per_unit = availability(core.store, resource, start, end)
        return {
            "resource": resource,
            "window": {"start": start, "end": end},
            "units": {str(u): [list(span) for span in spans] for u, spans in per_unit.items()},
        }

    @app.get("/v1/conflicts")
    async def get_conflicts(request: Request):
        auth(request)
        resource = request.query_params.get("resource", "")
        start = int_param(request, "from")
        end = int_param(request, "to")
        with core.lock:
            rows = find_conflicts(core.store, resource, start, end)
        return {"conflicts": [r.to_doc() for r in rows]}

    # -- batch -------------------------------------------------------------
    @app.post("/v1/batch")
    async def post_batch(request: Request):
        account = auth(request)
        doc = await body_of(request)
        payload = {
            "user": account["user"],
            "tier": account.get("tier", "default"),
            "kind": doc.get("kind", ""),
            "unit_count": doc.get("unit_count", 1),
            "duration": doc.get("duration", 0),
            "deadline": doc.get("deadline"),
        }
        return run(request, account, "batch.submit", payload, status=201)

    # -- policies ----------------------------------------------------------
    @app.post("/v1/policies")
    async def post_policy(request: Request):
        account = auth(request)
        if not account.get("admin"):
            raise CommandError("forbidden-actor", "policy install requires admin")
        doc = await body_of(request)
        return run(request, account, "policy.install", {"source": doc.get("source", "")}, status=201)

    @app.get("/v1/policies")
    async def get_policies(request: Request):
        auth(request)
        from .policy import pretty_print

        return {
            "policies": [
                {**p.to_doc(), "source": pretty_print(p)}
                for _, p in sorted(core.store.policies.items())
            ]
        }

    # -- auctions ------------------------------------------------------------
    @app.get("/v1/auctions")
    async def get_auctions(request: Request):
        auth(request)
        state = request.query_params.get("state")
        return {
            "auctions": [
                a.to_doc()
                for _, a in sorted(core.store.auctions.items())
                if state is None or a.state == state
            ]
        }

    @app.post("/v1/auctions/{auction_id}/bids")
    async def post_bid(request: Request, auction_id: str):
        account = auth(request)
        doc = await body_of(request)
        payload = {"auction": auction_id, "amount": doc.get("amount", 0), "user": account["user"]}
        return run(request, account, "auction.bid", payload, status=201)

    # -- tokens ------------------------------------------------------------
    @app.get("/v1/accounts/{user}/tokens")
    async def get_tokens(request: Request, user: str):
        auth(request)
        entries = [e.to_doc() for e in core.store.ledger.entries if e.user == user]
        return {"user": user, "balance": core.store.ledger.balance(user), "entries": entries}

    # -- telemetry -----------------------------------------------------------
    @app.post("/v1/telemetry/samples")
    async def post_samples(request: Request):
        account = auth(request)
        raw = await request.body()
        try:
            doc = json.loads(raw) if raw else {}
        except json.JSONDecodeError:
            raise CommandError("invalid-body", "request body must be JSON") from None
        samples = doc if isinstance(doc, list) else doc.get("samples", [doc] if doc else [])
        return run(request, account, "telemetry.ingest", {"samples": samples}, status=202)

    @app.get("/v1/reports/usage")
    async def get_usage(request: Request):
        auth(request)
        subject = request.query_params.get("subject", "")
        start = int_param(request, "from")
        end = int_param(request, "to")
        with core.lock:
            return usage_report(core.store, subject, start, end)

    # -- offers --------------------------------------------------------------
    @app.get("/v1/offers")
    async def get_offers(request: Request):
        auth(request)
        user = request.query_params.get("user")
        state = request.query_params.get("state")
        return {
            "offers": [
                o.to_doc()
                for _, o in sorted(core.store.offers.items())
                if (user is None or o.user == user) and (state is None or o.state == state)
            ]
        }

    @app.post("/v1/offers/{offer_id}/accept")
    async def accept_offer(request: Request, offer_id: str):
        account = auth(request)
        return run(request, account, "offer.accept", {"id": offer_id}, status=201)

    # -- events ---------------------------------------------------------------
    @app.get("/v1/events")
    async def get_events(request: Request):
        auth(request)
        since = int_param(request, "since", 0)
        return {"events": core.events_since(since), "head": core.head_seq()}

    # -- driver pass-through ---------------------------------------------------
    @app.post("/v1/driver/{driver_id}/exec")
    async def driver_exec(request: Request, driver_id: str):
        account = auth(request)
        doc = await body_of(request)
        payload = {
            "driver": driver_id,
            "verb": doc.get("verb", ""),
            "args": doc.get("args", []),
            "user": account["user"],
        }
        return run(request, account, "driver.exec", payload)

    @app.get("/v1/driver/{driver_id}/capabilities")
    async def driver_capabilities(request: Request, driver_id: str):
        auth(request)
        driver = core.store.drivers.get(driver_id)
        if driver is None:
            raise CommandError("unknown-driver", f"no driver {driver_id!r}")
        return driver.capabilities()

    # -- misc -----------------------------------------------------------------
    @app.get("/healthz")
    async def healthz():
        return {"ok": True, "head": core.head_seq(), "now": core.clock.now()}

    return app


def load_token_table(path: str) -> dict[str, dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    table = doc.get("tokens", doc)
    out: dict[str, dict] = {}
    for token, account in table.items():
        out[token] = {
            "user": account["user"],
            "tier": account.get("tier", "default"),
            "admin": bool(account.get("admin", False)),
        }
    return out


def demo_tokens() -> dict[str, dict]:
    """Development token table used by `shary serve --demo`."""
    return {
        "admin-token": {"user": "admin", "tier": "staff", "admin": True},
        "alice-token": {"user": "alice", "tier": "staff", "admin": False},
        "bob-token": {"user": "bob", "tier": "student", "admin": False},
    }
