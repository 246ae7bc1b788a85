"""Runtime configuration for a core instance.

These knobs are deployment configuration, not replayable state: a log must
be replayed under the same config it was written with (the serve command and
the tests both construct the config explicitly).
"""

from __future__ import annotations

from dataclasses import dataclass, field


def default_driver_registry() -> list[dict]:
    return [
        {"id": "gpu-fleet", "type": "sim-gpu", "parameters": {}},
        {"id": "nic-fleet", "type": "sim-gpu", "parameters": {}},
        {"id": "p4-login", "type": "sim-p4", "parameters": {}},
    ]


@dataclass
class CoreConfig:
    offers_enabled: bool = True
    promotion_enabled: bool = True
    offer_ttl: int = 30  # minutes an offer stays open
    offer_horizon: int = 1440  # freed windows starting further out get no offer
    default_reclaim_grace: int = 15  # minutes, when the policy sets none
    revoke_grace: int = 5  # minutes before best-effort session termination
    snapshot_every: int = 1000  # events between on-disk snapshots
    drivers: list[dict] = field(default_factory=default_driver_registry)
