"""Operator/researcher command line. A thin API client: every subcommand maps
to one HTTP call, reads SHARY_URL / SHARY_TOKEN from the environment, prints
stable line-oriented output, and exits nonzero with the server's message on
any API error. `--json` emits the raw response document instead.

The fleet verbs (instance, gpu, profile, user, remote, project, vpn) ride the
driver pass-through channel; everything else talks to the reservation API.
"""

from __future__ import annotations

import json
import sys

import click
import httpx

from .clock import from_iso


def parse_time(value: str) -> int:
    """Accept integer epoch minutes or an ISO 8601 timestamp."""
    try:
        return int(value)
    except ValueError:
        return from_iso(value)


class ApiClient:
    def __init__(self, url: str, token: str, http: httpx.Client | None = None):
        self.http = http or httpx.Client(base_url=url, timeout=30.0)
        self.token = token

    def call(self, method: str, path: str, body: dict | list | None = None, params: dict | None = None) -> dict:
        headers = {"Authorization": f"Bearer {self.token}"}
        response = self.http.request(method, path, json=body, params=params, headers=headers)
        try:
            doc = response.json()
        except json.JSONDecodeError:
            doc = {"error": {"code": "bad-response", "message": response.text}}
        if response.status_code >= 400:
            error = doc.get("error", {})
            raise ClickApiError(error.get("code", str(response.status_code)), error.get("message", ""), doc)
        return doc


class ClickApiError(click.ClickException):
    def __init__(self, code: str, message: str, doc: dict):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.doc = doc

    def show(self, file=None) -> None:
        click.echo(f"error: {self.format_message()}", err=True)
        details = self.doc.get("error", {}).get("details")
        if details:
            for d in details:
                if isinstance(d, dict) and "line" in d:
                    click.echo(f"  {d['line']}:{d['column']}: {d['message']}", err=True)
                else:
                    click.echo(f"  {d}", err=True)


def emit(ctx: click.Context, doc: dict, line: str | None = None) -> None:
    if ctx.obj["as_json"]:
        click.echo(json.dumps(doc, indent=2, sort_keys=True))
    elif line is not None:
        click.echo(line)
    else:
        for key in sorted(doc):
            if key != "seq":
                click.echo(f"{key}: {json.dumps(doc[key], sort_keys=True)}")


def client_of(ctx: click.Context) -> ApiClient:
    return ctx.obj["client"]


@click.group()
@click.option("--url", envvar="SHARY_URL", default="http://127.0.0.1:8080", show_default=True)
@click.option("--token", envvar="SHARY_TOKEN", default="", help="bearer token")
@click.option("--json", "as_json", is_flag=True, help="emit raw API documents")
@click.option("--driver", "driver_id", envvar="SHARY_DRIVER", default="gpu-fleet", show_default=True,
              help="driver targeted by the fleet verbs")
@click.pass_context
def main(ctx: click.Context, url: str, token: str, as_json: bool, driver_id: str) -> None:
    ctx.ensure_object(dict)
    if "client" not in ctx.obj:
        ctx.obj["client"] = ApiClient(url, token, ctx.obj.get("http"))
    ctx.obj["as_json"] = as_json
    ctx.obj["driver_id"] = driver_id


# ---------------------------------------------------------------------------
# Fleet pass-through verbs
# ---------------------------------------------------------------------------


def _passthrough(ctx: click.Context, verb: str, args: tuple[str, ...]) -> None:
    doc = client_of(ctx).call(
        "POST",
        f"/v1/driver/{ctx.obj['driver_id']}/exec",
        body={"verb": verb, "args": list(args)},
    )
    if verb == "vpn":
        emit(ctx, doc, doc.get("status", "vpn: not implemented (stub)"))
        return
    emit(ctx, doc)


def _fleet_verb(name: str, help_text: str):
    @main.command(name=name, help=help_text, context_settings={"ignore_unknown_options": True})
    @click.argument("args", nargs=-1, type=click.UNPROCESSED)
    @click.pass_context
    def _cmd(ctx: click.Context, args: tuple[str, ...]) -> None:
        _passthrough(ctx, name, args)

    return _cmd


_fleet_verb("instance", "Manage instances: create|start|stop|delete|list.")
_fleet_verb("gpu", "Attach or detach GPU units: add|remove|list.")
_fleet_verb("profile", "Manage instance profiles: list|copy|delete.")
_fleet_verb("user", "Fleet user management: add|list.")
_fleet_verb("remote", "Manage remote nodes: enroll|list.")
_fleet_verb("project", "Manage per-user projects: create|delete|list.")
_fleet_verb("vpn", "VPN configuration (stub).")


# ---------------------------------------------------------------------------
# Reservation verbs
# ---------------------------------------------------------------------------


@main.command()
@click.option("--resource", required=True)
@click.option("--units", "unit_count", type=int, default=1, show_default=True)
@click.option("--from", "start", required=True, help="start (ISO 8601 or epoch minutes)")
@click.option("--hours", type=float, default=None, help="duration in hours")
@click.option("--to", "end", default=None, help="end (ISO 8601 or epoch minutes)")
@click.option("--mode", type=click.Choice(["interactive", "batch"]), default="interactive")
@click.option("--bid", type=int, default=None, help="token bid if the window is contested")
@click.pass_context
def reserve(ctx, resource, unit_count, start, hours, end, mode, bid):
    """Book units of a resource for a time window."""
    start_min = parse_time(start)
    if end is not None:
        end_min = parse_time(end)
    elif hours is not None:
        end_min = start_min + int(hours * 60)
    else:
        raise click.UsageError("one of --to or --hours is required")
    body = {
        "resource": resource,
        "unit_count": unit_count,
        "start": start_min,
        "end": end_min,
        "mode": mode,
    }
    if bid is not None:
        body["bid"] = bid
    doc = client_of(ctx).call("POST", "/v1/reservations", body=body)
    units = ",".join(str(u) for u in doc.get("units", []))
    emit(
        ctx,
        doc,
        f"reservation {doc['id']} {doc['state']} resource={doc['resource']}"
        f" units={units or '-'} window=[{doc['start']},{doc['end']})",
    )


@main.command()
@click.argument("reservation_id")
@click.option("--at", default=None, help="release point (ISO 8601 or epoch minutes; default now)")
@click.pass_context
def release(ctx, reservation_id, at):
    """Release an active reservation early, freeing the remainder."""
    body = {}
    if at is not None:
        body["at"] = parse_time(at)
    doc = client_of(ctx).call("POST", f"/v1/reservations/{reservation_id}/release", body=body)
    freed = doc.get("freed")
    freed_text = f"[{freed[0]},{freed[1]})" if freed else "nothing"
    emit(ctx, doc, f"released {reservation_id} freed={freed_text}")


@main.command()
@click.argument("reservation_id")
@click.pass_context
def cancel(ctx, reservation_id):
    """Cancel a queued or confirmed reservation."""
    doc = client_of(ctx).call("DELETE", f"/v1/reservations/{reservation_id}")
    emit(ctx, doc, f"cancelled {reservation_id}")


@main.command()
@click.argument("auction_id")
@click.argument("amount", type=int)
@click.pass_context
def bid(ctx, auction_id, amount):
    """Place a sealed bid on an open auction."""
    doc = client_of(ctx).call("POST", f"/v1/auctions/{auction_id}/bids", body={"amount": amount})
    emit(ctx, doc, f"bid accepted auction={auction_id} amount={amount}")


@main.group()
def offers():
    """Last-minute offers."""


@offers.command("list")
@click.option("--user", default=None)
@click.pass_context
def offers_list(ctx, user):
    params = {"user": user} if user else None
    doc = client_of(ctx).call("GET", "/v1/offers", params=params)
    if ctx.obj["as_json"]:
        emit(ctx, doc)
        return
    for offer in doc.get("offers", []):
        click.echo(
            f"offer {offer['id']} {offer['state']} user={offer['user']}"
            f" resource={offer['resource']} window=[{offer['start']},{offer['end']})"
        )


@offers.command("accept")
@click.argument("offer_id")
@click.pass_context
def offers_accept(ctx, offer_id):
    doc = client_of(ctx).call("POST", f"/v1/offers/{offer_id}/accept")
    emit(ctx, doc, f"offer {offer_id} accepted reservation={doc['id']}")


@main.command()
@click.option("--subject", required=True, help="user or resource id")
@click.option("--from", "start", required=True)
@click.option("--to", "end", required=True)
@click.pass_context
def report(ctx, subject, start, end):
    """Usage report over a window."""
    doc = client_of(ctx).call(
        "GET",
        "/v1/reports/usage",
        params={"subject": subject, "from": parse_time(start), "to": parse_time(end)},
    )
    emit(
        ctx,
        doc,
        "\n".join(
            [
                f"subject {doc['subject']} window=[{doc['window']['start']},{doc['window']['end']})",
                f"busy_minutes {doc['busy_minutes']}",
                f"idle_minutes {doc['idle_minutes']}",
                f"dev_minutes {doc['dev_minutes']}",
                f"batch_minutes {doc['batch_minutes']}",
                f"unit_hours {doc['unit_hours']}",
                f"energy_kwh {doc['energy_kwh']}",
            ]
        ),
    )


@main.group()
def policy():
    """Reservation policies."""


@policy.command("install")
@click.option("--file", "-f", "path", type=click.Path(exists=True, allow_dash=True), required=True)
@click.pass_context
def policy_install(ctx, path):
    with click.open_file(path) as fh:
        source = fh.read()
    doc = client_of(ctx).call("POST", "/v1/policies", body={"source": source})
    emit(ctx, doc, f"policy {doc['policy']['name']} installed")


@policy.command("list")
@click.pass_context
def policy_list(ctx):
    doc = client_of(ctx).call("GET", "/v1/policies")
    if ctx.obj["as_json"]:
        emit(ctx, doc)
        return
    for pol in doc.get("policies", []):
        target = pol["applies_resource"] or pol["applies_kind"]
        click.echo(f"policy {pol['name']} target={target} tiers={len(pol['tiers'])}")


@main.group()
def resource():
    """Catalog management."""


@resource.command("add")
@click.option("--file", "-f", "path", type=click.Path(exists=True, allow_dash=True), required=True)
@click.pass_context
def resource_add(ctx, path):
    with click.open_file(path) as fh:
        descriptor = json.load(fh)
    doc = client_of(ctx).call("POST", "/v1/resources", body=descriptor)
    emit(ctx, doc, f"resource {doc['id']} registered ({doc['units']} units at {doc['site']})")


@resource.command("list")
@click.option("--kind", default=None)
@click.option("--site", default=None)
@click.pass_context
def resource_list(ctx, kind, site):
    params = {k: v for k, v in (("kind", kind), ("site", site)) if v}
    doc = client_of(ctx).call("GET", "/v1/resources", params=params or None)
    if ctx.obj["as_json"]:
        emit(ctx, doc)
        return
    for res in doc.get("resources", []):
        retired = " retired" if res["retired"] else ""
        click.echo(f"resource {res['id']} kind={res['kind']} site={res['site']} units={res['units']}{retired}")


# ---------------------------------------------------------------------------
# Server
# ---------------------------------------------------------------------------

_DEMO_POLICIES = [
    """
policy "gpu-default" {
  applies to kind gpu;
  tier "staff" advance 30d priority 1;
  tier "student" advance 7d priority 2;
  max_duration 8h;
  reclaim if idle > 30m grace 15m;
}
""",
    """
policy "switch-default" {
  applies to kind p4-switch;
  tier "staff" advance 14d priority 1;
  tier "student" advance 3d priority 2;
  max_duration 4h;
}
""",
]


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--log", "log_path", type=click.Path(), default=None, help="event log file (NDJSON)")
@click.option("--tokens", "tokens_path", type=click.Path(exists=True), default=None,
              help="bearer token table (JSON)")
@click.option("--demo", is_flag=True, help="use built-in demo tokens and seed the catalog")
@click.option("--tick-interval", type=int, default=60, show_default=True, help="seconds between ticks")
def serve(host, port, log_path, tokens_path, demo, tick_interval):
    """Run the reservation service (API + broker workers + periodic tick)."""
    import threading
    import time

    import uvicorn

    from .api import create_app, demo_tokens, load_token_table
    from .broker import start_workers
    from .core import Core
    from .notify import DeliveryWorker
    from .seed import load_inventory

    core = Core(log_path=log_path)
    if tokens_path:
        tokens = load_token_table(tokens_path)
    elif demo:
        tokens = demo_tokens()
    else:
        raise click.UsageError("either --tokens or --demo is required")
    if demo and not core.store.resources:
        load_inventory(core)
        for source in _DEMO_POLICIES:
            core.execute("policy.install", {"source": source}, actor="system")
    app = create_app(core, tokens)

    stop, _threads = start_workers(core, tick_interval)
    delivery = DeliveryWorker(core)

    def tick_loop():
        while not stop.is_set():
            core.execute("tick", {}, actor="system")
            delivery.run_once()
            stop.wait(tick_interval)

    threading.Thread(target=tick_loop, name="tick", daemon=True).start()
    time.sleep(0)  # let workers spin up before accepting traffic
    try:
        uvicorn.run(app, host=host, port=port, log_level="info")
    finally:
        stop.set()


if __name__ == "__main__":
    main()
