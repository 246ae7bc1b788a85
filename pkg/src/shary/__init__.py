"""shary — federated resource reservation with dynamic reallocation.

Calendar-based booking over a catalog of heterogeneous hardware (GPU
clusters, programmable switches, smart NICs, compute), governed by a small
policy DSL, with a token/auction economy, utilization telemetry, and a
reconciliation broker that converges access grants on pluggable resource
drivers.
"""

__version__ = "0.1.0"
