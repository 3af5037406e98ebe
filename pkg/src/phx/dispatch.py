"""Pluggable command executors: seeded simulation, live HTTP, notifications.

Executors are stateless; all determinism in simulated modes comes from the
per-step seed stream handed in by the engine. Draw order per simulated
dispatch is fixed: one success draw, then one latency draw for ``uniform``
latencies (``fixed`` consumes no draw).
"""

import json
from dataclasses import dataclass, field

from .canonical import content_hash
from .errors import NoExecutorError, SchemaError
from .timeutil import epoch_ms_to_rfc3339

SIM_MODES = ("dry-run", "range")
DEFAULT_SUCCESS_PROBABILITY = 1.0
DEFAULT_FIXED_LATENCY_MS = 100


@dataclass
class CommandResult:
    status: str  # "success" | "failure"
    outputs: dict = field(default_factory=dict)
    duration_ms: float = 0
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "success"


@dataclass(frozen=True)
class LatencySpec:
    distribution: str  # "fixed" | "uniform"
    params: tuple      # sorted (name, ms) pairs

    def sample(self, stream):
        params = dict(self.params)
        if self.distribution == "fixed":
            return params["ms"]
        return stream.next_uniform(params["low"], params["high"])

    def to_json_obj(self):
        return {"distribution": self.distribution, "params": dict(self.params)}

    @classmethod
    def from_json_obj(cls, obj, path):
        dist = obj.get("distribution")
        params = obj.get("params", {})
        if dist == "fixed":
            if "ms" not in params or params["ms"] < 0:
                raise SchemaError(f"{path}.params", "fixed latency requires non-negative ms")
        elif dist == "uniform":
            low, high = params.get("low"), params.get("high")
            if low is None or high is None or low < 0 or high < low:
                raise SchemaError(f"{path}.params", "uniform latency requires 0 <= low <= high")
        else:
            raise SchemaError(f"{path}.distribution", f"unknown distribution {dist!r}")
        return cls(dist, tuple(sorted(params.items())))


@dataclass(frozen=True)
class ProfileEntry:
    success_probability: float = None
    latency: LatencySpec = None

    def to_json_obj(self):
        obj = {}
        if self.success_probability is not None:
            obj["success_probability"] = self.success_probability
        if self.latency is not None:
            obj["latency"] = self.latency.to_json_obj()
        return obj

    @classmethod
    def from_json_obj(cls, obj, path):
        prob = obj.get("success_probability")
        if prob is not None and not 0 <= prob <= 1:
            raise SchemaError(f"{path}.success_probability", f"must be in [0,1], got {prob}")
        latency = None
        if "latency" in obj:
            latency = LatencySpec.from_json_obj(obj["latency"], f"{path}.latency")
        return cls(prob, latency)


_DEFAULT_ENTRY = ProfileEntry(
    DEFAULT_SUCCESS_PROBABILITY,
    LatencySpec("fixed", (("ms", DEFAULT_FIXED_LATENCY_MS),)),
)


@dataclass(frozen=True)
class SimulationProfile:
    defaults: ProfileEntry = _DEFAULT_ENTRY
    target_types: tuple = ()       # sorted (target_type, ProfileEntry)
    command_overrides: tuple = ()  # sorted (command_type, ProfileEntry)

    def resolve(self, command_type, target_type):
        """(success_probability, LatencySpec) for one dispatch."""
        chain = [dict(self.command_overrides).get(command_type)]
        if target_type is not None:
            chain.append(dict(self.target_types).get(target_type))
        chain.append(self.defaults)
        chain.append(_DEFAULT_ENTRY)
        prob = next(e.success_probability for e in chain if e and e.success_probability is not None)
        latency = next(e.latency for e in chain if e and e.latency is not None)
        return prob, latency

    def to_json_obj(self):
        return {
            "defaults": self.defaults.to_json_obj(),
            "target_types": {k: v.to_json_obj() for k, v in self.target_types},
            "command_overrides": {k: v.to_json_obj() for k, v in self.command_overrides},
        }

    def profile_hash(self) -> str:
        return content_hash(self.to_json_obj())

    @classmethod
    def from_json_obj(cls, obj):
        defaults = ProfileEntry.from_json_obj(obj.get("defaults", {}), "defaults")
        if defaults.success_probability is None or defaults.latency is None:
            defaults = ProfileEntry(
                defaults.success_probability if defaults.success_probability is not None
                else DEFAULT_SUCCESS_PROBABILITY,
                defaults.latency or _DEFAULT_ENTRY.latency,
            )
        targets = tuple(sorted(
            (k, ProfileEntry.from_json_obj(v, f"target_types.{k}"))
            for k, v in obj.get("target_types", {}).items()
        ))
        overrides = tuple(sorted(
            (k, ProfileEntry.from_json_obj(v, f"command_overrides.{k}"))
            for k, v in obj.get("command_overrides", {}).items()
        ))
        return cls(defaults, targets, overrides)

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_obj(json.load(fh))


@dataclass
class DispatchContext:
    mode: str
    profile: SimulationProfile = field(default_factory=SimulationProfile)
    organisation: str = "phx"
    severity: int = 50
    hub: object = None           # exchange hub for live emissions
    sim_bundles: list = field(default_factory=list)
    http_timeout_s: float = 5.0


def _cover_expected(command, value):
    return {name: value for name in command.expected_outputs}


def _noop_executor(command, agent, targets, content, ctx, stream, now_ms):
    return CommandResult("success", _cover_expected(command, ""), 0, "noop")


def _simulated_executor(command, agent, targets, content, ctx, stream, now_ms):
    target_type = targets[0].target_type if targets else None
    prob, latency = ctx.profile.resolve(command.command_type, target_type)
    success = stream.next_float() < prob
    duration = latency.sample(stream)
    if success:
        outputs = {name: f"simulated:{name}" for name in command.expected_outputs}
        return CommandResult("success", outputs, duration,
                             f"simulated {command.command_type}")
    return CommandResult("failure", {}, duration,
                         f"simulated {command.command_type} failure")


def _notification_executor(command, agent, targets, content, ctx, stream, now_ms):
    if ctx.mode in SIM_MODES or ctx.hub is None:
        bundle_id = "bundle--" + stream.next_uuid()
        bundle = {
            "id": bundle_id,
            "created": epoch_ms_to_rfc3339(now_ms),
            "sender": ctx.organisation,
            "kind": "alert",
            "tlp": "amber",
            "severity": ctx.severity,
            "subject": content,
            "payload": {"command_type": command.command_type, "simulated": True},
        }
        ctx.sim_bundles.append(bundle)
    else:
        bundle = ctx.hub.emit_alert(
            subject=content, severity=ctx.severity,
            payload={"command_type": command.command_type}, tlp="amber",
        ).to_json_obj()
        bundle_id = bundle["id"]
    outputs = {"__bundle_id__": bundle_id}
    outputs.update(_cover_expected(command, bundle_id))
    return CommandResult("success", outputs, 1, f"emitted {bundle_id}")


def _http_executor(command, agent, targets, content, ctx, stream, now_ms):
    import httpx

    try:
        started = __import__("time").monotonic()
        response = httpx.post(
            agent.address,
            content=content.encode("utf-8"),
            headers={"content-type": "text/plain"},
            timeout=httpx.Timeout(10.0, connect=ctx.http_timeout_s),
        )
        elapsed_ms = (__import__("time").monotonic() - started) * 1000.0
    except httpx.HTTPError as exc:
        return CommandResult("failure", {}, 0, f"transport-error: {exc}")
    outputs = {"__http_response__": response.text}
    outputs.update(_cover_expected(command, response.text))
    if 200 <= response.status_code < 300:
        return CommandResult("success", outputs, elapsed_ms, f"HTTP {response.status_code}")
    return CommandResult("failure", outputs, elapsed_ms, f"HTTP {response.status_code}")


class ExecutorRegistry:
    """Maps (command_type, agent_type, mode) to an executor callable."""

    def __init__(self):
        self._table = {}

    def register(self, command_type, agent_type, mode, executor):
        self._table[(command_type, agent_type, mode)] = executor

    def lookup(self, command_type, agent_type, mode):
        executor = self._table.get((command_type, agent_type, mode))
        if executor is None:
            raise NoExecutorError(command_type, agent_type, mode)
        return executor

    def dispatch(self, command, agent, targets, content, ctx, stream, now_ms) -> CommandResult:
        agent_type = agent.agent_type if agent is not None else "engine-internal"
        executor = self.lookup(command.command_type, agent_type, ctx.mode)
        return executor(command, agent, targets, content, ctx, stream, now_ms)


_SIM_COMMANDS = ("http-api", "shell-sim", "notification", "exchange", "noop")


def default_registry() -> ExecutorRegistry:
    registry = ExecutorRegistry()
    for mode in SIM_MODES:
        for agent_type in ("simulated", "engine-internal", "http-endpoint"):
            registry.register("noop", agent_type, mode, _noop_executor)
            registry.register("shell-sim", agent_type, mode, _simulated_executor)
            registry.register("http-api", agent_type, mode, _simulated_executor)
            registry.register("notification", agent_type, mode, _notification_executor)
            registry.register("exchange", agent_type, mode, _notification_executor)
    for agent_type in ("simulated", "engine-internal", "http-endpoint"):
        registry.register("noop", agent_type, "live", _noop_executor)
    registry.register("http-api", "http-endpoint", "live", _http_executor)
    for agent_type in ("engine-internal", "http-endpoint"):
        registry.register("notification", agent_type, "live", _notification_executor)
        registry.register("exchange", agent_type, "live", _notification_executor)
    assert_sim_totality(registry)
    return registry


def assert_sim_totality(registry: ExecutorRegistry):
    """Simulated modes must resolve the whole command/agent matrix."""
    for command_type in ("noop", "shell-sim", "notification", "exchange"):
        for agent_type in ("simulated", "engine-internal"):
            for mode in SIM_MODES:
                registry.lookup(command_type, agent_type, mode)


DEFAULT_REGISTRY = default_registry()
