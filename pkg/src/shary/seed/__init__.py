"""Seed catalog: the initial two-site testbed inventory.

Two programmable switches and six smart-NIC shelves in Torino, two GPU
clusters (4x L40S, 4x A16) in Rome. Loading it enrolls every descriptor
through the normal registration command, so the fixture doubles as an
end-to-end exercise of the descriptor schema.
"""

from __future__ import annotations

import json
from importlib import resources


def inventory_docs() -> list[dict]:
    text = resources.files(__package__).joinpath("inventory.json").read_text("utf-8")
    return json.loads(text)["resources"]


def load_inventory(core) -> list[str]:
    """Enroll the seed inventory; returns the new resource ids."""
    ids = []
    for doc in inventory_docs():
        result, _ = core.execute("resource.register", {"descriptor": doc}, actor="admin")
        ids.append(result["id"])
    return ids
