"""Adaptation layer: the uniform driver seam and the two simulated drivers.

Every driver exposes {snapshot, apply(action), capabilities} plus a
pass-through `execute(user, verb, args)` channel for resource-specific
verbs. Access is enforced against the driver's *observed* grant set, which
only the broker mutates (via grant/revoke/terminate actions), so no verb
can ever manufacture access that reconciliation didn't put there.

The GPU driver models a fleet of remote nodes running a container/VM
manager: per-user projects, instances, profiles, and whole-GPU attachment.
The P4 switch driver models login permission sets and program installs; an
install bumps a pipeline-generation counter and flags every other tenant's
live session as disrupted, because installing reconfigures all pipelines.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

from .errors import CommandError, DriverUnreachable

GrantKey = tuple[str, str, int]  # (user, resource, unit)


@dataclass(frozen=True)
class DriverAction:
    kind: str  # grant | revoke | terminate_best_effort
    user: str
    resource: str
    unit: int
    start: int = 0
    end: int = 0
    reason: str = ""

    def key(self) -> GrantKey:
        return (self.user, self.resource, self.unit)

    def to_doc(self) -> dict:
        return {
            "kind": self.kind,
            "user": self.user,
            "resource": self.resource,
            "unit": self.unit,
            "start": self.start,
            "end": self.end,
            "reason": self.reason,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "DriverAction":
        return cls(
            kind=doc["kind"],
            user=doc["user"],
            resource=doc["resource"],
            unit=doc["unit"],
            start=doc.get("start", 0),
            end=doc.get("end", 0),
            reason=doc.get("reason", ""),
        )


class BaseDriver:
    driver_type = "base"

    def __init__(self, driver_id: str, parameters: dict | None = None):
        self.driver_id = driver_id
        self.parameters = dict(parameters or {})
        self.reachable = True
        self._grants: dict[GrantKey, dict] = {}

    # -- uniform interface ----------------------------------------------
    def _check_reachable(self) -> None:
        if not self.reachable:
            raise DriverUnreachable(f"driver {self.driver_id} is unreachable")

    def snapshot(self) -> dict:
        self._check_reachable()
        return {
            "driver": self.driver_id,
            "type": self.driver_type,
            "grants": [
                {"user": u, "resource": r, "unit": n, **self._grants[(u, r, n)]}
                for u, r, n in sorted(self._grants)
            ],
            "sessions": self._session_docs(),
            "state": self._state_doc(),
        }

    def apply(self, action: DriverAction) -> None:
        self._check_reachable()
        if action.kind == "grant":
            self._grants[action.key()] = {"start": action.start, "end": action.end}
        elif action.kind == "revoke":
            self._grants.pop(action.key(), None)
        elif action.kind == "terminate_best_effort":
            self._terminate(action.user, action.resource, action.unit)
        else:
            raise CommandError("invalid-action", f"unknown action kind {action.kind!r}")

    def capabilities(self) -> dict:
        return {"driver": self.driver_id, "type": self.driver_type, "verbs": []}

    def execute(self, user: str, verb: str, args: list[str]) -> dict:
        raise CommandError("unknown-verb", f"driver {self.driver_id} has no verb {verb!r}")

    def has_grant(self, user: str, resource: str, unit: int) -> bool:
        return (user, resource, unit) in self._grants

    def grant_keys(self) -> set[GrantKey]:
        return set(self._grants)

    # -- persistence ------------------------------------------------------
    def to_doc(self) -> dict:
        return {
            "driver": self.driver_id,
            "type": self.driver_type,
            "grants": [
                {"user": u, "resource": r, "unit": n, **self._grants[(u, r, n)]}
                for u, r, n in sorted(self._grants)
            ],
            "state": self._state_doc(),
        }

    def load_doc(self, doc: dict) -> None:
        self._grants = {
            (g["user"], g["resource"], g["unit"]): {"start": g["start"], "end": g["end"]}
            for g in doc.get("grants", [])
        }
        self._load_state(doc.get("state", {}))

    # -- hooks for subclasses ----------------------------------------------
    def _session_docs(self) -> list[dict]:
        return []

    def _terminate(self, user: str, resource: str, unit: int) -> None:
        pass

    def _state_doc(self) -> dict:
        return {}

    def _load_state(self, state: dict) -> None:
        pass


class SimGpuDriver(BaseDriver):
    """Simulated GPU fleet: remote nodes, per-user projects, instances, and
    whole-unit GPU attachment gated by the observed grant set."""

    driver_type = "sim-gpu"

    def __init__(self, driver_id: str, parameters: dict | None = None):
        super().__init__(driver_id, parameters)
        self.remotes: dict[str, dict] = {"main": {"address": "local"}}
        self.users: list[str] = []
        self.projects: dict[str, dict] = {}
        self.profiles: dict[str, dict] = {"default": {"description": "base profile"}}
        # instance name -> {owner, project, remote, status, gpus: [[resource, unit], ...]}
        self.instances: dict[str, dict] = {}

    def capabilities(self) -> dict:
        return {
            "driver": self.driver_id,
            "type": self.driver_type,
            "verbs": ["instance", "gpu", "profile", "user", "remote", "project", "vpn"],
        }

    # -- sessions = live GPU attachments ------------------------------------
    def _session_docs(self) -> list[dict]:
        out = []
        for name in sorted(self.instances):
            inst = self.instances[name]
            for resource, unit in inst["gpus"]:
                out.append(
                    {"user": inst["owner"], "resource": resource, "unit": unit, "instance": name}
                )
        return out

    def _terminate(self, user: str, resource: str, unit: int) -> None:
        for inst in self.instances.values():
            if inst["owner"] == user and [resource, unit] in inst["gpus"]:
                inst["gpus"].remove([resource, unit])

    # -- verb dispatch -------------------------------------------------------
    def execute(self, user: str, verb: str, args: list[str]) -> dict:
        self._check_reachable()
        if not user or not isinstance(user, str):
            raise CommandError("unknown-user", "verb requires a user")
        args = [str(a) for a in args]
        handler = {
            "instance": self._verb_instance,
            "gpu": self._verb_gpu,
            "profile": self._verb_profile,
            "user": self._verb_user,
            "remote": self._verb_remote,
            "project": self._verb_project,
            "vpn": self._verb_vpn,
        }.get(verb)
        if handler is None:
            raise CommandError("unknown-verb", f"no verb {verb!r}")
        return handler(user, args)

    def _default_project(self, user: str) -> str:
        name = f"proj-{user}"
        if name not in self.projects:
            self.projects[name] = {"owner": user}
        return name

    def _own_instance(self, user: str, name: str) -> dict:
        inst = self.instances.get(name)
        if inst is None or inst["owner"] != user:
            raise CommandError("unknown-instance", f"no instance {name!r}")
        return inst

    def _verb_instance(self, user: str, args: list[str]) -> dict:
        if not args:
            raise CommandError("invalid-args", "instance verb needs a subcommand")
        sub, rest = args[0], args[1:]
        if sub == "create":
            if not rest:
                raise CommandError("invalid-args", "instance create <name> [remote]")
            name = rest[0]
            remote = rest[1] if len(rest) > 1 else "main"
            if name in self.instances:
                raise CommandError("duplicate-instance", f"instance {name!r} exists")
            if remote not in self.remotes:
                raise CommandError("unknown-remote", f"no remote {remote!r}")
            self.instances[name] = {
                "owner": user,
                "project": self._default_project(user),
                "remote": remote,
                "status": "stopped",
                "gpus": [],
            }
            return {"instance": name, "status": "stopped"}
        if sub == "list":
            return {
                "instances": [
                    {"name": n, **{k: v for k, v in inst.items() if k != "owner"}}
                    for n, inst in sorted(self.instances.items())
                    if inst["owner"] == user
                ]
            }
        if sub in ("start", "stop", "delete"):
            if not rest:
                raise CommandError("invalid-args", f"instance {sub} <name>")
            inst = self._own_instance(user, rest[0])
            if sub == "start":
                inst["status"] = "running"
                return {"instance": rest[0], "status": "running"}
            if sub == "stop":
                inst["status"] = "stopped"
                return {"instance": rest[0], "status": "stopped"}
            del self.instances[rest[0]]
            return {"instance": rest[0], "status": "deleted"}
        raise CommandError("invalid-args", f"unknown instance subcommand {sub!r}")

    def _parse_unit(self, args: list[str]) -> tuple[str, int]:
        # accepts "resource unit" or the compact "resource:unit"
        if len(args) == 1 and ":" in args[0]:
            resource, _, unit = args[0].rpartition(":")
        elif len(args) == 2:
            resource, unit = args
        else:
            raise CommandError("invalid-args", "expected <resource> <unit> or <resource:unit>")
        try:
            return resource, int(unit)
        except ValueError:
            raise CommandError("invalid-args", f"unit {unit!r} is not an integer") from None

    def _verb_gpu(self, user: str, args: list[str]) -> dict:
        if not args:
            raise CommandError("invalid-args", "gpu verb needs a subcommand")
        sub, rest = args[0], args[1:]
        if sub == "list":
            return {"attached": self._session_docs()}
        if sub not in ("add", "remove") or not rest:
            raise CommandError("invalid-args", "gpu add|remove <instance> <resource> <unit>")
        inst = self._own_instance(user, rest[0])
        resource, unit = self._parse_unit(rest[1:])
        if sub == "add":
            if not self.has_grant(user, resource, unit):
                raise CommandError("no-grant", f"{user} holds no grant on {resource}:{unit}")
            for other in self.instances.values():
                if [resource, unit] in other["gpus"]:
                    raise CommandError(
                        "unit-already-attached", f"{resource}:{unit} is already attached"
                    )
            inst["gpus"].append([resource, unit])
            inst["gpus"].sort()
            return {"instance": rest[0], "gpus": inst["gpus"]}
        if [resource, unit] not in inst["gpus"]:
            raise CommandError("not-attached", f"{resource}:{unit} is not attached")
        inst["gpus"].remove([resource, unit])
        return {"instance": rest[0], "gpus": inst["gpus"]}

    def _verb_profile(self, user: str, args: list[str]) -> dict:
        if not args:
            raise CommandError("invalid-args", "profile verb needs a subcommand")
        sub, rest = args[0], args[1:]
        if sub == "list":
            return {"profiles": sorted(self.profiles)}
        if sub == "copy":
            if len(rest) != 2:
                raise CommandError("invalid-args", "profile copy <src> <dst>")
            src, dst = rest
            if src not in self.profiles:
                raise CommandError("unknown-profile", f"no profile {src!r}")
            if dst in self.profiles:
                raise CommandError("duplicate-profile", f"profile {dst!r} exists")
            self.profiles[dst] = copy.deepcopy(self.profiles[src])
            return {"profiles": sorted(self.profiles)}
        if sub == "delete":
            if not rest:
                raise CommandError("invalid-args", "profile delete <name>")
            if rest[0] not in self.profiles:
                raise CommandError("unknown-profile", f"no profile {rest[0]!r}")
            del self.profiles[rest[0]]
            return {"profiles": sorted(self.profiles)}
        raise CommandError("invalid-args", f"unknown profile subcommand {sub!r}")

    def _verb_user(self, user: str, args: list[str]) -> dict:
        if len(args) == 2 and args[0] == "add":
            if args[1] not in self.users:
                self.users.append(args[1])
            return {"users": sorted(self.users)}
        if args == ["list"]:
            return {"users": sorted(self.users)}
        raise CommandError("invalid-args", "user add <name> | user list")

    def _verb_remote(self, user: str, args: list[str]) -> dict:
        if args and args[0] == "enroll":
            if len(args) < 2:
                raise CommandError("invalid-args", "remote enroll <name> [address]")
            name = args[1]
            if name in self.remotes:
                raise CommandError("duplicate-remote", f"remote {name!r} exists")
            self.remotes[name] = {"address": args[2] if len(args) > 2 else name}
            return {"remotes": sorted(self.remotes)}
        if args == ["list"]:
            return {"remotes": sorted(self.remotes)}
        raise CommandError("invalid-args", "remote enroll <name> [address] | remote list")

    def _verb_project(self, user: str, args: list[str]) -> dict:
        if not args:
            raise CommandError("invalid-args", "project verb needs a subcommand")
        sub, rest = args[0], args[1:]
        if sub == "list":
            return {
                "projects": sorted(n for n, p in self.projects.items() if p["owner"] == user)
            }
        if sub == "create":
            if not rest:
                raise CommandError("invalid-args", "project create <name>")
            if rest[0] in self.projects:
                raise CommandError("duplicate-project", f"project {rest[0]!r} exists")
            self.projects[rest[0]] = {"owner": user}
            return {"project": rest[0]}
        if sub == "delete":
            if not rest:
                raise CommandError("invalid-args", "project delete <name>")
            proj = self.projects.get(rest[0])
            if proj is None or proj["owner"] != user:
                raise CommandError("unknown-project", f"no project {rest[0]!r}")
            if any(i["project"] == rest[0] for i in self.instances.values()):
                raise CommandError("project-not-empty", f"project {rest[0]!r} has instances")
            del self.projects[rest[0]]
            return {"project": rest[0], "deleted": True}
        raise CommandError("invalid-args", f"unknown project subcommand {sub!r}")

    def _verb_vpn(self, user: str, args: list[str]) -> dict:
        return {"status": "vpn: not implemented (stub)", "args": args}

    # -- persistence ---------------------------------------------------------
    def _state_doc(self) -> dict:
        return {
            "remotes": {k: dict(v) for k, v in sorted(self.remotes.items())},
            "users": sorted(self.users),
            "projects": {k: dict(v) for k, v in sorted(self.projects.items())},
            "profiles": {k: dict(v) for k, v in sorted(self.profiles.items())},
            "instances": {k: copy.deepcopy(v) for k, v in sorted(self.instances.items())},
        }

    def _load_state(self, state: dict) -> None:
        self.remotes = {k: dict(v) for k, v in state.get("remotes", {}).items()}
        self.users = list(state.get("users", []))
        self.projects = {k: dict(v) for k, v in state.get("projects", {}).items()}
        self.profiles = {k: dict(v) for k, v in state.get("profiles", {}).items()}
        self.instances = {k: copy.deepcopy(v) for k, v in state.get("instances", {}).items()}


class SimP4Driver(BaseDriver):
    """Simulated programmable-switch login control.

    Grants materialize as switch-OS login permissions. Installing a program
    reconfigures every pipeline: the generation counter increments and any
    other tenant's live session is flagged disrupted.
    """

    driver_type = "sim-p4"

    def __init__(self, driver_id: str, parameters: dict | None = None):
        super().__init__(driver_id, parameters)
        # per switch: {"sessions": [...], "program": {...}|None, "generation": int}
        self.switches: dict[str, dict] = {}

    def capabilities(self) -> dict:
        return {
            "driver": self.driver_id,
            "type": self.driver_type,
            "verbs": ["session", "install", "status"],
        }

    def _switch(self, resource: str) -> dict:
        return self.switches.setdefault(
            resource, {"sessions": [], "program": None, "generation": 0}
        )

    def _session_docs(self) -> list[dict]:
        out = []
        for resource in sorted(self.switches):
            for sess in self.switches[resource]["sessions"]:
                out.append({"resource": resource, "unit": 0, **sess})
        return out

    def _terminate(self, user: str, resource: str, unit: int) -> None:
        sw = self.switches.get(resource)
        if sw is not None:
            sw["sessions"] = [s for s in sw["sessions"] if s["user"] != user]

    def _require_login(self, user: str, resource: str) -> None:
        if not user or not isinstance(user, str):
            raise CommandError("unknown-user", "a user is required")
        if not self.has_grant(user, resource, 0):
            raise CommandError("no-grant", f"{user} has no login on {resource}")

    def open_session(self, user: str, resource: str, now: int = 0) -> dict:
        self._check_reachable()
        self._require_login(user, resource)
        sw = self._switch(resource)
        sess = {"user": user, "opened_at": now, "disrupted": False}
        sw["sessions"].append(sess)
        return sess

    def close_session(self, user: str, resource: str) -> None:
        self._check_reachable()
        self._terminate(user, resource, 0)

    def install_program(self, user: str, resource: str, program_id: str, now: int = 0) -> dict:
        """Install a data-plane program: all pipelines reconfigure, so every
        other tenant's live session is marked disrupted."""
        self._check_reachable()
        self._require_login(user, resource)
        sw = self._switch(resource)
        sw["generation"] += 1
        sw["program"] = {"id": program_id, "by": user, "installed_at": now}
        for sess in sw["sessions"]:
            if sess["user"] != user:
                sess["disrupted"] = True
        return {"resource": resource, "generation": sw["generation"], "program": program_id}

    def execute(self, user: str, verb: str, args: list[str]) -> dict:
        self._check_reachable()
        args = [str(a) for a in args]
        if verb == "session":
            if len(args) == 2 and args[0] == "open":
                return self.open_session(user, args[1])
            if len(args) == 2 and args[0] == "close":
                self.close_session(user, args[1])
                return {"closed": True}
            raise CommandError("invalid-args", "session open|close <resource>")
        if verb == "install":
            if len(args) != 2:
                raise CommandError("invalid-args", "install <resource> <program-id>")
            return self.install_program(user, args[0], args[1])
        if verb == "status":
            if len(args) != 1:
                raise CommandError("invalid-args", "status <resource>")
            sw = self._switch(args[0])
            return {
                "resource": args[0],
                "generation": sw["generation"],
                "program": sw["program"],
                "sessions": sw["sessions"],
            }
        raise CommandError("unknown-verb", f"no verb {verb!r}")

    # -- persistence ---------------------------------------------------------
    def _state_doc(self) -> dict:
        return {"switches": {k: copy.deepcopy(v) for k, v in sorted(self.switches.items())}}

    def _load_state(self, state: dict) -> None:
        self.switches = {k: copy.deepcopy(v) for k, v in state.get("switches", {}).items()}


_DRIVER_TYPES = {
    "sim-gpu": SimGpuDriver,
    "sim-p4": SimP4Driver,
}


def build_registry(config_docs: list[dict]) -> dict[str, BaseDriver]:
    """Instantiate drivers from the registry config document."""
    registry: dict[str, BaseDriver] = {}
    for doc in config_docs:
        driver_id = doc.get("id")
        driver_type = doc.get("type")
        if not driver_id or driver_id in registry:
            raise CommandError("invalid-driver-config", f"bad or duplicate driver id {driver_id!r}")
        cls = _DRIVER_TYPES.get(driver_type or "")
        if cls is None:
            raise CommandError(
                "invalid-driver-config",
                f"driver type must be one of {sorted(_DRIVER_TYPES)}; got {driver_type!r}",
            )
        registry[driver_id] = cls(driver_id, doc.get("parameters"))
    return registry
