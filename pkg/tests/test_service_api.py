import pytest
from fastapi.testclient import TestClient

from shary.api import create_app, demo_tokens
from shary.broker import BrokerWorker
from shary.notify import DeliveryWorker

from conftest import T0, book, tick

TOKENS = {
    "admin-token": {"user": "admin", "tier": "staff", "admin": True},
    "alice-token": {"user": "alice", "tier": "staff", "admin": False},
    "bob-token": {"user": "bob", "tier": "student", "admin": False},
}


def bearer(token):
    return {"Authorization": f"Bearer {token}"}


@pytest.fixture
def client(core):
    app = create_app(core, TOKENS)
    with TestClient(app) as tc:
        yield tc


def test_auth_required(client):
    assert client.get("/v1/resources").status_code == 401
    assert client.get("/v1/resources", headers=bearer("wrong")).status_code == 401
    assert client.get("/v1/resources", headers=bearer("alice-token")).status_code == 200


def test_post_reservation_created(client):
    body = {"resource": "l40s-cluster", "unit_count": 1, "start": T0 + 60, "end": T0 + 180}
    response = client.post("/v1/reservations", json=body, headers=bearer("alice-token"))
    assert response.status_code == 201
    doc = response.json()
    assert doc["state"] == "confirmed"
    assert doc["user"] == "alice"
    assert doc["seq"] > 0


def test_post_reservation_misaligned_422(client):
    body = {"resource": "l40s-cluster", "unit_count": 1, "start": T0 + 61, "end": T0 + 180}
    response = client.post("/v1/reservations", json=body, headers=bearer("alice-token"))
    assert response.status_code == 422
    assert response.json()["error"]["code"] == "misaligned-interval"


def test_post_reservation_rejection_carries_seq(client):
    body = {"resource": "l40s-cluster", "unit_count": 9, "start": T0 + 60, "end": T0 + 180}
    response = client.post("/v1/reservations", json=body, headers=bearer("alice-token"))
    assert response.status_code == 422
    doc = response.json()
    assert doc["error"]["code"] == "units-exceed-capacity"
    assert doc["seq"] > 0  # the rejection is journalled, hence an event


def test_events_since(client, core):
    head = core.head_seq()
    book(core, "alice")  # first touch: registration event precedes the request
    response = client.get(f"/v1/events?since={head}", headers=bearer("alice-token"))
    events = response.json()["events"]
    assert [e["seq"] for e in events] == [head + 1, head + 2]
    assert [e["kind"] for e in events] == ["user.register", "reservation.request"]


def test_events_in_order_from_zero(client, core):
    response = client.get("/v1/events?since=0", headers=bearer("alice-token"))
    seqs = [e["seq"] for e in response.json()["events"]]
    assert seqs == list(range(1, core.head_seq() + 1))


def test_resource_admin_gate(client):
    doc = {"id": "x1", "kind": "compute", "site": "lab", "units": 1, "driver": "gpu-fleet"}
    assert client.post("/v1/resources", json=doc, headers=bearer("alice-token")).status_code == 403
    assert client.post("/v1/resources", json=doc, headers=bearer("admin-token")).status_code == 201
    assert client.delete("/v1/resources/x1", headers=bearer("bob-token")).status_code == 403
    assert client.delete("/v1/resources/x1", headers=bearer("admin-token")).status_code == 200


def test_resource_unknown_keys_rejected(client):
    doc = {"id": "x2", "kind": "compute", "site": "lab", "units": 1,
           "driver": "gpu-fleet", "color": "red"}
    response = client.post("/v1/resources", json=doc, headers=bearer("admin-token"))
    assert response.status_code == 422


def test_availability_endpoint(client, core):
    book(core, "alice", start=T0 + 60, hours=1)
    response = client.get(
        f"/v1/availability?resource=l40s-cluster&from={T0}&to={T0 + 180}",
        headers=bearer("alice-token"),
    )
    units = response.json()["units"]
    assert units["0"] == [[T0, T0 + 60], [T0 + 120, T0 + 180]]
    assert units["1"] == [[T0, T0 + 180]]


def test_policy_install_and_diagnostics(client):
    bad = 'policy "p" { applies to kind gpu; max_duration 8; }'
    response = client.post("/v1/policies", json={"source": bad}, headers=bearer("admin-token"))
    assert response.status_code == 422
    details = response.json()["error"]["details"]
    assert details and {"line", "column", "message"} <= set(details[0])

    good = 'policy "wedge" { applies to resource "wedge-1"; tier "ops" advance 3d priority 1; }'
    response = client.post("/v1/policies", json={"source": good}, headers=bearer("admin-token"))
    assert response.status_code == 201
    listing = client.get("/v1/policies", headers=bearer("alice-token")).json()
    names = [p["name"] for p in listing["policies"]]
    assert "wedge" in names
    assert any("applies to resource" in p["source"] for p in listing["policies"])


def test_tokens_endpoint(client, core):
    book(core, "alice")
    response = client.get("/v1/accounts/alice/tokens", headers=bearer("alice-token"))
    doc = response.json()
    assert doc["balance"] == 500
    assert doc["entries"][0]["reason"] == "grant"


def test_release_and_cancel_endpoints(client, core, clock):
    booked = book(core, "alice", start=T0 + 60, hours=2)
    other = book(core, "bob", start=T0 + 60, hours=2, tier="student")
    # bob cannot cancel alice's reservation
    response = client.delete(f"/v1/reservations/{booked['id']}", headers=bearer("bob-token"))
    assert response.status_code == 403
    response = client.delete(f"/v1/reservations/{other['id']}", headers=bearer("bob-token"))
    assert response.status_code == 200
    tick(core, clock, at=T0 + 60)
    response = client.post(
        f"/v1/reservations/{booked['id']}/release",
        json={"at": T0 + 120},
        headers=bearer("alice-token"),
    )
    assert response.status_code == 200
    assert response.json()["freed"] == [T0 + 120, T0 + 180]


def test_offer_accept_race_conflict(client, core, clock):
    start = T0
    blockers = [book(core, u, start=start, hours=4) for u in ("u0", "u1", "u2", "u3")]
    book(core, "alice", start=start + 120, hours=2, unit_count=2)
    tick(core, clock, at=start)
    clock.set(start + 120)
    core.execute("reservation.release", {"id": blockers[0]["id"], "at": start + 120}, actor="u0")
    offer = next(o for o in core.store.offers.values() if o.state == "open")
    # the window is grabbed directly before alice accepts
    book(core, "zoe", start=start + 120, hours=2)
    response = client.post(f"/v1/offers/{offer.id}/accept", headers=bearer("alice-token"))
    assert response.status_code == 409
    listing = client.get("/v1/offers?user=alice", headers=bearer("alice-token")).json()
    assert listing["offers"][0]["state"] == "superseded"


def test_batch_endpoint(client):
    response = client.post(
        "/v1/batch",
        json={"kind": "gpu", "unit_count": 1, "duration": 120},
        headers=bearer("alice-token"),
    )
    assert response.status_code == 201
    assert response.json()["state"] == "confirmed"


def test_telemetry_endpoint_accepts_list(client):
    samples = [
        {"resource": "l40s-cluster", "unit": 0, "ts": T0, "util": 42, "watts": 150},
        {"resource": "l40s-cluster", "unit": 0, "ts": T0 + 1, "util": 44, "watts": 151},
    ]
    response = client.post("/v1/telemetry/samples", json=samples, headers=bearer("alice-token"))
    assert response.status_code == 202
    assert response.json()["ingested"] == 2
    bad = [{"resource": "l40s-cluster", "unit": 0, "ts": T0 - 10, "util": 1}]
    response = client.post("/v1/telemetry/samples", json=bad, headers=bearer("alice-token"))
    assert response.status_code == 422


def test_usage_report_endpoint(client, core, clock):
    booked = book(core, "alice", start=T0 + 60, hours=1)
    tick(core, clock, at=T0 + 60)
    response = client.get(
        f"/v1/reports/usage?subject=alice&from={T0 + 60}&to={T0 + 120}",
        headers=bearer("alice-token"),
    )
    doc = response.json()
    assert doc["busy_minutes"] + doc["idle_minutes"] == 60


def test_driver_exec_endpoint(client, core, clock):
    booked = book(core, "alice", start=T0 + 60)
    tick(core, clock, at=T0 + 60)
    BrokerWorker(core, "gpu-fleet").run_once()
    response = client.post(
        "/v1/driver/gpu-fleet/exec",
        json={"verb": "instance", "args": ["create", "box"]},
        headers=bearer("alice-token"),
    )
    assert response.status_code == 200
    unit = booked["units"][0]
    response = client.post(
        "/v1/driver/gpu-fleet/exec",
        json={"verb": "gpu", "args": ["add", "box", "l40s-cluster", str(unit)]},
        headers=bearer("alice-token"),
    )
    assert response.status_code == 200
    # bob has no grant on that unit
    client.post(
        "/v1/driver/gpu-fleet/exec",
        json={"verb": "instance", "args": ["create", "bob-box"]},
        headers=bearer("bob-token"),
    )
    response = client.post(
        "/v1/driver/gpu-fleet/exec",
        json={"verb": "gpu", "args": ["add", "bob-box", "l40s-cluster", "3"]},
        headers=bearer("bob-token"),
    )
    assert response.status_code == 403
    assert response.json()["error"]["code"] == "no-grant"


def test_auction_endpoints(client, core, clock):
    core.execute(
        "policy.install",
        {"source": 'policy "l40s-auction" { applies to resource "l40s-cluster"; '
                   'tier "staff" advance 30d priority 1; tier "student" advance 7d priority 2; '
                   'max_duration 8h; on_contention auction deadline 2h; }'},
        actor="admin",
    )
    start = T0 + 60
    for u in ("u0", "u1", "u2", "u3"):
        book(core, u, start=start)
    body = {"resource": "l40s-cluster", "unit_count": 1, "start": start, "end": start + 120}
    response = client.post("/v1/reservations", json=body, headers=bearer("alice-token"))
    assert response.json()["state"] == "queued"
    auctions = client.get("/v1/auctions?state=open", headers=bearer("alice-token")).json()
    auction_id = auctions["auctions"][0]["id"]
    response = client.post(
        f"/v1/auctions/{auction_id}/bids", json={"amount": 40}, headers=bearer("alice-token")
    )
    assert response.status_code == 201
    response = client.post(
        f"/v1/auctions/{auction_id}/bids", json={"amount": 9000}, headers=bearer("bob-token")
    )
    assert response.status_code == 422
    assert response.json()["error"]["code"] == "insufficient-tokens"


def test_idempotency_header(client, core):
    body = {"resource": "l40s-cluster", "unit_count": 1, "start": T0 + 60, "end": T0 + 180}
    headers = {**bearer("alice-token"), "Idempotency-Key": "retry-42"}
    first = client.post("/v1/reservations", json=body, headers=headers).json()
    second = client.post("/v1/reservations", json=body, headers=headers).json()
    assert first == second
    assert len(core.store.reservations) == 1


def test_webhook_notification_delivery_and_retry_cap(core, clock):
    core.execute(
        "user.register",
        {"user": "alice", "channel": "webhook", "webhook_url": "http://hooks.example/alice"},
        actor="admin",
    )
    booked = book(core, "alice")
    core.execute("reservation.cancel", {"id": booked["id"]}, actor="alice")
    note = next(n for n in core.store.notifications if n.channel == "webhook")
    assert not note.delivered

    calls = []

    def failing_transport(url, payload):
        calls.append(url)
        return False

    worker = DeliveryWorker(core, transport=failing_transport)
    for _ in range(5):  # endpoint down, every round
        worker.run_once()
    note = next(n for n in core.store.notifications if n.id == note.id)
    assert note.delivered is False
    assert note.attempts == 3  # capped: never retried more than 3 times
    assert len(calls) == 3

    # replay reproduces the delivery outcome without calling any webhook
    from shary.core import Core
    from shary.config import CoreConfig

    replayed = Core.replay(list(core.log.events), config=CoreConfig())
    assert replayed.store.snapshot_bytes() == core.store.snapshot_bytes()


def test_email_stub_channel_delivers_at_creation(core):
    core.execute("user.register", {"user": "bob", "channel": "email-stub"}, actor="admin")
    booked = book(core, "bob")
    core.execute("reservation.cancel", {"id": booked["id"]}, actor="bob")
    note = next(n for n in core.store.notifications if n.user == "bob")
    assert note.channel == "email-stub" and note.delivered is True


def test_notification_triggers_exactly_once_each(core, clock):
    # cancellation, preemption warning, offer, auction result: one note each
    start = T0
    blockers = [book(core, u, start=start, hours=4) for u in ("u0", "u1", "u2", "u3")]
    book(core, "anna", start=start + 120, hours=2, unit_count=2)
    core.execute("reservation.cancel", {"id": blockers[3]["id"]}, actor="u3")
    tick(core, clock, at=start)
    core.execute("owner.reclaim", {"resource": "l40s-cluster", "admin": True}, actor="admin")
    clock.set(start + 120)
    core.execute("reservation.release", {"id": blockers[0]["id"], "at": start + 120}, actor="u0")
    subjects = [n.subject for n in core.store.notifications]
    assert subjects.count("reservation cancelled") == 1
    assert subjects.count("preemption warning") == 3  # one per surviving active holder
    assert subjects.count("last-minute availability") == 1


def test_healthz_open(client):
    assert client.get("/healthz").json()["ok"] is True


def test_demo_tokens_shape():
    table = demo_tokens()
    assert all({"user", "tier", "admin"} <= set(v) for v in table.values())
