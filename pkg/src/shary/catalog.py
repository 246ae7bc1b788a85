"""Resource catalog: enroll, describe, list, and retire schedulable assets.

A resource descriptor names a physical asset (a GPU cluster, a programmable
switch, a smart NIC shelf, a compute node) and how many independently
reservable units it carries. Descriptors are enrolled from a JSON document
with a fixed key set; unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .errors import CommandError

if TYPE_CHECKING:
    from .store import Store

KINDS = ("gpu", "p4-switch", "smartnic", "compute")

_REQUIRED_KEYS = ("id", "kind", "site", "units", "driver")
_OPTIONAL_KEYS = ("attributes", "owner")


@dataclass
class Resource:
    id: str
    kind: str
    site: str
    units: int
    driver: str
    attributes: dict[str, str] = field(default_factory=dict)
    owner: str = "shared"
    retired: bool = False
    enrolled_at: int = 0

    def unit_indices(self) -> range:
        return range(self.units)

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "site": self.site,
            "units": self.units,
            "driver": self.driver,
            "attributes": dict(self.attributes),
            "owner": self.owner,
            "retired": self.retired,
            "enrolled_at": self.enrolled_at,
        }


def validate_descriptor(doc: object) -> dict:
    """Check a descriptor document against the wire schema, returning the
    normalized field dict. Raises CommandError("invalid-descriptor") with the
    offending key in the message."""
    if not isinstance(doc, dict):
        raise CommandError("invalid-descriptor", "descriptor must be a JSON object")
    unknown = sorted(set(doc) - set(_REQUIRED_KEYS) - set(_OPTIONAL_KEYS))
    if unknown:
        raise CommandError("invalid-descriptor", f"unknown keys: {', '.join(unknown)}")
    missing = [k for k in _REQUIRED_KEYS if k not in doc]
    if missing:
        raise CommandError("invalid-descriptor", f"missing keys: {', '.join(missing)}")
    if not isinstance(doc["id"], str) or not doc["id"]:
        raise CommandError("invalid-descriptor", "id must be a non-empty string")
    if doc["kind"] not in KINDS:
        raise CommandError(
            "invalid-descriptor", f"kind must be one of {', '.join(KINDS)}"
        )
    if not isinstance(doc["site"], str) or not doc["site"]:
        raise CommandError("invalid-descriptor", "site must be a non-empty string")
    if not isinstance(doc["units"], int) or isinstance(doc["units"], bool):
        raise CommandError("invalid-units", "units must be an integer")
    if doc["units"] < 1:
        raise CommandError("invalid-units", "units must be >= 1")
    if not isinstance(doc["driver"], str) or not doc["driver"]:
        raise CommandError("invalid-descriptor", "driver must be a non-empty string")
    attributes = doc.get("attributes", {})
    if not isinstance(attributes, dict) or any(
        not isinstance(k, str) or not isinstance(v, str) for k, v in attributes.items()
    ):
        raise CommandError("invalid-descriptor", "attributes must map strings to strings")
    owner = doc.get("owner", "shared")
    if not isinstance(owner, str) or not owner:
        raise CommandError("invalid-descriptor", "owner must be a non-empty string")
    return {
        "id": doc["id"],
        "kind": doc["kind"],
        "site": doc["site"],
        "units": doc["units"],
        "driver": doc["driver"],
        "attributes": dict(attributes),
        "owner": owner,
    }


def register_resource(store: "Store", doc: object, now: int) -> Resource:
    fields = validate_descriptor(doc)
    if fields["id"] in store.resources:
        raise CommandError("duplicate-id", f"resource {fields['id']!r} already enrolled")
    if fields["driver"] not in store.drivers:
        raise CommandError("unknown-driver", f"driver {fields['driver']!r} is not registered")
    resource = Resource(enrolled_at=now, **fields)
    store.resources[resource.id] = resource
    return resource


def get_resource(store: "Store", resource_id: str) -> Resource:
    resource = store.resources.get(resource_id)
    if resource is None:
        raise CommandError("unknown-resource", f"no resource {resource_id!r}")
    return resource


def get_active_resource(store: "Store", resource_id: str) -> Resource:
    resource = get_resource(store, resource_id)
    if resource.retired:
        raise CommandError("retired-resource", f"resource {resource_id!r} is retired")
    return resource


def list_resources(
    store: "Store",
    kind: str | None = None,
    site: str | None = None,
    owner: str | None = None,
) -> list[Resource]:
    """All matching descriptors, id ascending. Filters are conjunctive."""
    out = []
    for rid in sorted(store.resources):
        res = store.resources[rid]
        if kind is not None and res.kind != kind:
            continue
        if site is not None and res.site != site:
            continue
        if owner is not None and res.owner != owner:
            continue
        out.append(res)
    return out


def mark_retired(store: "Store", resource_id: str) -> Resource:
    """Retire a resource, keeping its record (and all history) in place."""
    resource = get_resource(store, resource_id)
    resource.retired = True
    return resource
