"""Resilience playbook domain types (document format `phx-rp-1.0`)."""

import ipaddress
import re
from dataclasses import dataclass
from urllib.parse import urlparse

SPEC_VERSION = "phx-rp-1.0"

PLAYBOOK_TYPES = ("business-continuity", "incident-response", "recovery", "what-if")
STEP_TYPES = (
    "start", "end", "action", "manual", "parallel",
    "if-condition", "while-condition", "switch", "playbook-action",
)
VAR_TYPES = ("string", "integer", "float", "boolean", "ip-address", "uri", "list-of-string")
COMMAND_TYPES = ("http-api", "shell-sim", "notification", "exchange", "noop")
AGENT_TYPES = ("engine-internal", "http-endpoint", "simulated")
TARGET_TYPES = ("firewall", "server", "service", "smart-meter", "telecom-link", "ehr-system", "generic")
SLO_METRICS = ("availability", "response-time")

VARIABLE_NAME_RE = re.compile(r"^__[a-z0-9_-]{1,64}__$")
PLAYBOOK_ID_RE = re.compile(r"^playbook--[0-9a-f]{8}-[0-9a-f]{4}-4[0-9a-f]{3}-[89ab][0-9a-f]{3}-[0-9a-f]{12}$")
AGENT_ID_RE = re.compile(r"^agent--[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}$")
TARGET_ID_RE = re.compile(r"^target--[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}$")

# Names the engine itself may write; referencing them never counts as dangling.
BUILTIN_VARIABLES = ("__bundle_id__", "__http_response__", "__loop_exhausted__")

DEFAULT_ACTION_TIMEOUT_MS = 30_000
DEFAULT_MANUAL_TIMEOUT_MS = 86_400_000
DEFAULT_MAX_ITERATIONS = 64


def check_variable_value(var_type: str, value):
    """Return None if value fits var_type, else a reason string."""
    if var_type == "string" or var_type == "uri" or var_type == "ip-address":
        if not isinstance(value, str):
            return f"expected {var_type} text, got {type(value).__name__}"
        if var_type == "ip-address":
            try:
                ipaddress.ip_address(value)
            except ValueError:
                return f"not an IPv4/IPv6 address: {value!r}"
        if var_type == "uri":
            parsed = urlparse(value)
            if not parsed.scheme:
                return f"not an absolute URI: {value!r}"
        return None
    if var_type == "integer":
        if isinstance(value, bool) or not isinstance(value, int):
            return f"expected integer, got {type(value).__name__}"
        return None
    if var_type == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return f"expected float, got {type(value).__name__}"
        return None
    if var_type == "boolean":
        if not isinstance(value, bool):
            return f"expected boolean, got {type(value).__name__}"
        return None
    if var_type == "list-of-string":
        if not isinstance(value, (list, tuple)) or not all(isinstance(x, str) for x in value):
            return "expected list of strings"
        return None
    return f"unknown var_type {var_type!r}"


def coerce_variable_value(var_type: str, value):
    """Normalize a checked value (floats stored as float, lists as tuple)."""
    if var_type == "float":
        return float(value)
    if var_type == "list-of-string":
        return tuple(value)
    return value


def render_value(value) -> str:
    """Canonical text rendering used by interpolation and switch matching."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(render_value(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class Variable:
    name: str
    var_type: str
    value: object = None
    constant: bool = False
    external: bool = False
    extras: tuple = ()


@dataclass(frozen=True)
class Command:
    command_type: str
    content: str
    expected_outputs: tuple = ()
    extras: tuple = ()


@dataclass(frozen=True)
class AgentDefinition:
    id: str
    agent_type: str
    name: str
    address: str = None
    extras: tuple = ()


@dataclass(frozen=True)
class TargetDefinition:
    id: str
    target_type: str
    name: str
    hypothetical: bool = False
    properties: tuple = ()  # sorted (key, value) pairs
    extras: tuple = ()

    def property_map(self) -> dict:
        return dict(self.properties)


@dataclass(frozen=True)
class ServiceLevelObjective:
    service: str
    metric: str
    target: float
    tier: int
    extras: tuple = ()


@dataclass(frozen=True)
class WorkflowStep:
    id: str
    type: str
    name: str
    # successor references (presence depends on type)
    on_completion: str = None
    on_success: str = None
    on_failure: str = None
    on_true: str = None
    on_false: str = None
    branches: tuple = ()
    body: str = None
    cases: tuple = ()  # ordered (rendered-literal, step-id) pairs
    default: str = None
    # payload fields
    commands: tuple = ()
    agent: str = None
    targets: tuple = ()
    timeout_ms: int = None
    retries: int = 0
    delay_ms: int = 0
    instruction: str = None
    condition: str = None
    max_iterations: int = None
    variable: str = None
    playbook_id: str = None
    binding_map: tuple = ()  # sorted (callee-external, caller-variable) pairs
    extras: tuple = ()

    def successor_edges(self):
        """All (field-path, target-step-id) successor references of this step."""
        edges = []
        for attr in ("on_completion", "on_success", "on_failure", "on_true", "on_false", "body", "default"):
            value = getattr(self, attr)
            if value is not None:
                edges.append((attr, value))
        for i, branch in enumerate(self.branches):
            edges.append((f"branches[{i}]", branch))
        for literal, target in self.cases:
            edges.append((f"cases.{literal}", target))
        return edges

    def case_map(self) -> dict:
        return dict(self.cases)

    def binding_pairs(self) -> dict:
        return dict(self.binding_map)


@dataclass(frozen=True)
class ResiliencePlaybook:
    id: str
    spec_version: str
    name: str
    playbook_types: tuple
    severity: int
    priority: int
    created: str
    modified: str
    workflow_start: str
    workflow: tuple  # sorted (step-id, WorkflowStep) pairs
    description: str = None
    playbook_variables: tuple = ()
    agent_definitions: tuple = ()
    target_definitions: tuple = ()
    service_objectives: tuple = ()
    labels: tuple = ()
    extras: tuple = ()

    def steps(self) -> dict:
        return dict(self.workflow)

    def variables(self) -> dict:
        return dict(self.playbook_variables)

    def agents(self) -> dict:
        return dict(self.agent_definitions)

    def targets(self) -> dict:
        return dict(self.target_definitions)

    def step(self, step_id: str) -> WorkflowStep:
        return self.steps()[step_id]

    def has_type(self, playbook_type: str) -> bool:
        return playbook_type in self.playbook_types

    def successor_map(self) -> dict:
        """step-id -> list of (field-path, successor-id), in declaration order."""
        return {sid: step.successor_edges() for sid, step in self.workflow}
